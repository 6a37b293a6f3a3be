/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_tables_free: (a: number, b: number) => void;
export const depth_sweep: (a: number) => [number, number, number];
export const fault_run: (a: bigint, b: number) => [number, number, number];
export const tables_comparisons: (a: number) => [number, number];
export const tables_invocations: (a: number) => [number, number];
export const tables_passed: (a: number) => number;
export const tables_relayers: (a: number) => [number, number];
export const tables_summary: (a: number) => [number, number];
export const train_hotel: (a: number, b: number, c: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */

export class Tables {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly comparisons: string;
    readonly invocations: string;
    /**
     * False if any scenario check failed.
     */
    readonly passed: boolean;
    readonly relayers: string;
    readonly summary: string;
}

/**
 * Linear call chains of depth 1 up to `max_depth`.
 */
export function depth_sweep(max_depth: number): Tables;

/**
 * The fault suite with the tampering relayer set to probability `tamper`.
 */
export function fault_run(seed: bigint, tamper: number): Tables;

/**
 * `bookings` concurrent train-hotel trips under both protocols.
 */
export function train_hotel(block_time_ms: number, bookings: number, fgsl: boolean): Tables;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_tables_free: (a: number, b: number) => void;
    readonly depth_sweep: (a: number) => [number, number, number];
    readonly fault_run: (a: bigint, b: number) => [number, number, number];
    readonly tables_comparisons: (a: number) => [number, number];
    readonly tables_invocations: (a: number) => [number, number];
    readonly tables_passed: (a: number) => number;
    readonly tables_relayers: (a: number) => [number, number];
    readonly tables_summary: (a: number) => [number, number];
    readonly train_hotel: (a: number, b: number, c: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

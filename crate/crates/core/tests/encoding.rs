//! Byte layouts written out by hand and compared with the encoder.

use sha2::{Digest as _, Sha256};

use xcsim::hash::{encode, hash_of, hash_parts, Address, Digest};
use xcsim::ledger::{EventLog, Receipt, TxStatus};
use xcsim::runtime::Call;
use xcsim::wire::{message_id, Envelope, Payload, LOCK_REQ};

fn u32le(x: u32) -> Vec<u8> {
    x.to_le_bytes().to_vec()
}

fn u64le(x: u64) -> Vec<u8> {
    x.to_le_bytes().to_vec()
}

fn string(s: &str) -> Vec<u8> {
    [u64le(s.len() as u64), s.as_bytes().to_vec()].concat()
}

fn parts(ps: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in ps {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

#[test]
fn invoke_calldata() {
    let call = Call::Invoke { function: "book".into(), args: vec![3, 9] };
    let want = [u32le(1), string("book"), u64le(2), u64le(3), u64le(9)].concat();
    assert_eq!(encode(&call), want);
}

#[test]
fn receipt_layout() {
    let r = Receipt {
        tx_hash: Digest([7; 32]),
        status: TxStatus::Revert,
        gas_used: 21_000,
        logs: vec![EventLog { emitter: Address([2; 20]), topic: "T".into(), payload: vec![0xaa, 0xbb] }],
    };
    let want =
        [vec![7; 32], u32le(1), u64le(21_000), u64le(1), vec![2; 20], string("T"), u64le(2), vec![0xaa, 0xbb]].concat();
    assert_eq!(r.encode(), want);
    assert_eq!(hash_of(&r).0, <[u8; 32]>::from(Sha256::digest(&want)));
}

#[test]
fn derived_ids() {
    assert_eq!(hash_parts(&[b"inv", &[1; 32]]).0, parts(&[b"inv", &[1; 32]]));
    let id = message_id(3, &Digest([4; 32]), 2);
    assert_eq!(id.0, parts(&[b"msg", &3u32.to_le_bytes(), &[4; 32], &2u32.to_le_bytes()]));
    let a = Address::contract(2, &Address([5; 20]), 9);
    let h = parts(&[b"create", &2u32.to_le_bytes(), &[5; 20], &9u64.to_le_bytes()]);
    assert_eq!(a.0, h[12..]);
}

#[test]
fn envelope_starts_with_destination_then_tag() {
    let env = Envelope {
        dest_chain: 3,
        payload: Payload::LockReq { inv: Digest([1; 32]), part: 0, expiry_blocks: 12, contracts: vec![] },
    };
    let want = [u32le(3), u32le(3), vec![1; 32], u32le(0), u64le(12), u64le(0)].concat();
    assert_eq!(encode(&env), want);
    assert_eq!(env.payload.topic(), LOCK_REQ);
}

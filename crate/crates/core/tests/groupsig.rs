//! Contract tests for the group signature: correctness, randomisation,
//! opening, revocation and encoding robustness.

use std::collections::HashSet;

use cacti_core::groupsig::{
    begin_join, revoke_by_signature, setup, sign, verify, GroupManager, GroupPublicKey,
    GroupSigError, GroupSignature, MemberId, MemberPrivateKey, RevocationList, SCHEME_ID,
};
use rand::rngs::OsRng;

fn enrol(manager: &mut GroupManager) -> (MemberId, MemberPrivateKey) {
    let (req, pending) = begin_join(manager.gpk(), &mut OsRng).unwrap();
    let resp = manager.join(&req, &mut OsRng).unwrap();
    (resp.member_id, pending.finish(&resp).unwrap())
}

#[test]
fn sign_verify_round_trip() {
    let mut manager = GroupManager::setup(128, &mut OsRng).unwrap();
    let (_, key) = enrol(&mut manager);
    let rl = RevocationList::new();
    let sig = sign(&key, b"message", &rl, &mut OsRng).unwrap();
    assert_eq!(sig.scheme_id, SCHEME_ID);
    assert!(verify(manager.gpk(), b"message", &sig, &rl));
    assert!(!verify(manager.gpk(), b"other message", &sig, &rl));

    let decoded = GroupSignature::from_bytes(&sig.to_bytes()).unwrap();
    assert_eq!(decoded, sig);
    assert!(verify(manager.gpk(), b"message", &decoded, &rl));

    let other = GroupManager::setup(128, &mut OsRng).unwrap();
    assert!(!verify(other.gpk(), b"message", &sig, &rl));
    let gpk = GroupPublicKey::from_bytes(&manager.gpk().to_bytes()).unwrap();
    assert_eq!(&gpk, manager.gpk());
}

#[test]
fn security_level_cap() {
    assert_eq!(
        setup(256, &mut OsRng).unwrap_err(),
        GroupSigError::UnsupportedSecurityLevel(256)
    );
}

#[test]
fn hundred_signatures_share_no_bytes() {
    let mut manager = GroupManager::setup(128, &mut OsRng).unwrap();
    let (_, key) = enrol(&mut manager);
    let rl = RevocationList::new();
    let sigs: Vec<GroupSignature> = (0..100)
        .map(|_| sign(&key, b"same message", &rl, &mut OsRng).unwrap())
        .collect();
    let material: HashSet<Vec<u8>> = sigs.iter().map(|s| s.sig_material.clone()).collect();
    assert_eq!(material.len(), 100);
    let nonces: HashSet<[u8; 16]> = sigs.iter().map(|s| s.nonce).collect();
    assert_eq!(nonces.len(), 100);
    // No 32-byte window of the signature material repeats across signatures:
    // nothing in a signature is constant per member.
    let mut windows = HashSet::new();
    for s in &sigs {
        for chunk in s.sig_material.chunks_exact(32) {
            assert!(windows.insert(chunk.to_vec()), "repeated 32-byte chunk");
        }
    }
}

#[test]
fn open_is_a_bijection_over_sixteen_members() {
    let mut manager = GroupManager::setup(128, &mut OsRng).unwrap();
    let members: Vec<_> = (0..16).map(|_| enrol(&mut manager)).collect();
    let rl = RevocationList::new();
    let mut opened = HashSet::new();
    for (id, key) in &members {
        for round in 0..2u8 {
            let msg = [b'm', round];
            let sig = sign(key, &msg, &rl, &mut OsRng).unwrap();
            assert_eq!(manager.open(&msg, &sig).unwrap(), *id);
        }
        opened.insert(*id);
    }
    assert_eq!(opened.len(), 16);

    let (_, key) = &members[0];
    let sig = sign(key, b"x", &rl, &mut OsRng).unwrap();
    let stranger = GroupManager::setup(128, &mut OsRng).unwrap();
    assert_eq!(stranger.open(b"x", &sig), Err(GroupSigError::OpenFailed));
    assert_eq!(manager.open(b"y", &sig), Err(GroupSigError::OpenFailed));
}

#[test]
fn duplicate_join_is_refused() {
    let mut manager = GroupManager::setup(128, &mut OsRng).unwrap();
    let (req, _) = begin_join(manager.gpk(), &mut OsRng).unwrap();
    manager.join(&req, &mut OsRng).unwrap();
    assert_eq!(manager.join(&req, &mut OsRng).unwrap_err(), GroupSigError::DuplicateMember);
}

#[test]
fn revocation_blocks_exactly_the_revoked_member() {
    let mut manager = GroupManager::setup(128, &mut OsRng).unwrap();
    let members: Vec<_> = (0..6).map(|_| enrol(&mut manager)).collect();
    let empty = RevocationList::new();
    let victim = 2;
    let evidence = sign(&members[victim].1, b"abuse", &empty, &mut OsRng).unwrap();
    let rl = revoke_by_signature(&empty, manager.gpk(), &evidence).unwrap();
    assert_eq!(rl.len(), 1);
    assert_eq!(
        revoke_by_signature(&rl, manager.gpk(), &evidence).unwrap_err(),
        GroupSigError::AlreadyRevoked
    );
    assert_eq!(RevocationList::from_bytes(&rl.to_bytes()).unwrap(), rl);

    for (i, (_, key)) in members.iter().enumerate() {
        let sig = sign(key, b"later", &rl, &mut OsRng).unwrap();
        assert_eq!(verify(manager.gpk(), b"later", &sig, &rl), i != victim, "member {i}");
        // A signature made before the list grew no longer verifies against it.
        let stale = sign(key, b"later", &empty, &mut OsRng).unwrap();
        assert!(!verify(manager.gpk(), b"later", &stale, &rl));
    }
}

#[test]
fn every_single_byte_mutation_is_rejected() {
    let mut manager = GroupManager::setup(128, &mut OsRng).unwrap();
    let (_, key) = enrol(&mut manager);
    let rl = RevocationList::new();
    let sig = sign(&key, b"m", &rl, &mut OsRng).unwrap();
    let bytes = sig.to_bytes();
    for i in 0..bytes.len() {
        let mut mutated = bytes.clone();
        mutated[i] ^= 0x01;
        if let Ok(s) = GroupSignature::from_bytes(&mutated) {
            assert!(!verify(manager.gpk(), b"m", &s, &rl), "byte {i}");
        }
    }
    assert!(GroupSignature::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

use std::ffi::{c_char, CString};
use std::ptr;

use ministone::engine::Engine;
use ministone::obsact::FeatureSchema;
use ministone::policy::{save_checkpoint, NetDims, PolicyParams};
use ministone::testkit::common_deck;
use ministone_ffi::*;

fn last_error() -> String {
    let mut need = 0usize;
    unsafe { ms_last_error(ptr::null_mut(), 0, &mut need) };
    let mut buf = vec![0u8; need];
    assert_eq!(unsafe { ms_last_error(buf.as_mut_ptr() as *mut c_char, need, &mut need) }, MsStatus::Ok);
    String::from_utf8(buf[..need - 1].to_vec()).unwrap()
}

fn replay_text(s: *const MsState) -> CString {
    let mut need = 0usize;
    assert_eq!(unsafe { ms_state_replay(s, ptr::null_mut(), 0, &mut need) }, MsStatus::BufferTooSmall);
    let mut buf = vec![0u8; need];
    assert_eq!(unsafe { ms_state_replay(s, buf.as_mut_ptr() as *mut c_char, need, &mut need) }, MsStatus::Ok);
    buf.pop();
    CString::new(buf).unwrap()
}

#[test]
fn random_games_round_trip_through_replay_text() {
    unsafe {
        let e = ms_engine_new();
        let n = ms_engine_action_count(e) as usize;
        assert!(n > 0);
        assert_eq!(ms_engine_pool_size(e), 72);
        assert_eq!(ms_engine_pool_checksum(e), Engine::ministone_v1().pool().checksum().0);
        for seed in 0..20u64 {
            let mut s = ptr::null_mut();
            assert_eq!(
                ms_match_new(e, (seed % 3) as u8, 2, ptr::null(), 0, ptr::null(), 0, seed, &mut s),
                MsStatus::Ok
            );
            let mut mask = vec![0u8; n];
            let mut steps = 0u64;
            while ms_state_to_move(s) >= 0 {
                assert_eq!(ms_legal_mask(e, s, mask.as_mut_ptr(), n), MsStatus::Ok);
                let mut a = 0u16;
                assert_eq!(ms_random_action(e, s, seed * 1000 + steps, &mut a), MsStatus::Ok);
                assert_eq!(mask[a as usize], 1);
                let mut r = [0i8; 2];
                assert_eq!(ms_step(e, s, a, r.as_mut_ptr()), MsStatus::Ok);
                steps += 1;
            }
            let outcome = ms_state_outcome(s);
            assert!((0..=2).contains(&outcome));
            let text = replay_text(s);
            let mut replayed = -5;
            assert_eq!(ms_replay_verify(e, text.as_ptr(), &mut replayed), MsStatus::Ok);
            assert_eq!(replayed, outcome);
            let mut a = 0u16;
            assert_eq!(ms_greedy_action(e, s, &mut a), MsStatus::Terminal);
            ms_state_free(s);
        }
        ms_engine_free(e);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let e = ms_engine_new();
        let mut s = ptr::null_mut();
        assert_eq!(ms_match_new(e, 7, 0, ptr::null(), 0, ptr::null(), 0, 1, &mut s), MsStatus::InvalidArgument);
        assert!(last_error().contains("hero"));
        assert!(s.is_null());
        assert_eq!(ms_match_new(ptr::null(), 0, 0, ptr::null(), 0, ptr::null(), 0, 1, &mut s), MsStatus::NullArgument);

        let short: Vec<u16> = common_deck()[..29].iter().map(|c| c.0).collect();
        assert_eq!(
            ms_match_new(e, 0, 1, short.as_ptr(), short.len(), ptr::null(), 0, 1, &mut s),
            MsStatus::InvalidArgument
        );

        assert_eq!(ms_match_new(e, 0, 1, ptr::null(), 0, ptr::null(), 0, 1, &mut s), MsStatus::Ok);
        let n = ms_engine_action_count(e) as usize;
        let mut mask = vec![0u8; n];
        assert_eq!(ms_legal_mask(e, s, mask.as_mut_ptr(), n - 1), MsStatus::BufferTooSmall);
        ms_legal_mask(e, s, mask.as_mut_ptr(), n);
        let bad = mask.iter().position(|&m| m == 0).unwrap() as u16;
        let before = replay_text(s);
        assert_eq!(ms_step(e, s, bad, ptr::null_mut()), MsStatus::IllegalAction);
        assert!(last_error().contains("illegal"));
        assert_eq!(replay_text(s), before);

        let mut label = [0 as c_char; 64];
        let mut need = 0;
        assert_eq!(ms_action_label(e, 0, label.as_mut_ptr(), 64, &mut need), MsStatus::Ok);
        assert_eq!(ms_action_label(e, u16::MAX, label.as_mut_ptr(), 64, &mut need), MsStatus::InvalidArgument);

        let garbage = CString::new("not a replay").unwrap();
        assert_ne!(ms_replay_verify(e, garbage.as_ptr(), ptr::null_mut()), MsStatus::Ok);

        let missing = CString::new("/nonexistent/x.ckpt").unwrap();
        let mut p = ptr::null_mut();
        assert_eq!(ms_policy_load(e, missing.as_ptr(), 0, &mut p), MsStatus::Io);
        ms_state_free(s);
        ms_engine_free(e);
        // freeing null is a no-op
        ms_state_free(ptr::null_mut());
        ms_engine_free(ptr::null_mut());
    }
}

#[test]
fn clone_is_independent() {
    unsafe {
        let e = ms_engine_new();
        let deck: Vec<u16> = common_deck().iter().map(|c| c.0).collect();
        let mut s = ptr::null_mut();
        assert_eq!(ms_match_new(e, 2, 2, deck.as_ptr(), 30, deck.as_ptr(), 30, 3, &mut s), MsStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(ms_state_clone(s, &mut c), MsStatus::Ok);
        let mut a = 0;
        ms_greedy_action(e, s, &mut a);
        ms_step(e, s, a, ptr::null_mut());
        assert_ne!(replay_text(s), replay_text(c));
        assert_eq!(ms_state_health(c, 0), 30);
        ms_state_free(s);
        ms_state_free(c);
        ms_engine_free(e);
    }
}

#[test]
fn policy_plays_full_match() {
    let engine = Engine::ministone_v1();
    let dims = NetDims::new(&FeatureSchema::for_engine(&engine), 4, 8);
    let params = PolicyParams::<f32>::init(dims, engine.pool().checksum(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&params, &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let e = ms_engine_new();
        let mut p = ptr::null_mut();
        assert_eq!(ms_policy_load(e, cpath.as_ptr(), 9, &mut p), MsStatus::Ok);
        let mut s = ptr::null_mut();
        ms_match_new(e, 0, 1, ptr::null(), 0, ptr::null(), 0, 4, &mut s);
        while ms_state_to_move(s) >= 0 {
            let mut a = 0;
            assert_eq!(ms_policy_act(e, p, s, ms_state_to_move(s) == 0, &mut a), MsStatus::Ok);
            assert_eq!(ms_step(e, s, a, ptr::null_mut()), MsStatus::Ok);
        }
        let mut a = 0;
        assert_eq!(ms_policy_act(e, p, s, true, &mut a), MsStatus::Terminal);
        ms_state_free(s);
        ms_policy_free(p);
        ms_engine_free(e);
    }
}

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hop_cli::store::FAULT_POINTS;
use hop_cli::{FaultPoint, MotionStore, Precondition};
use hop_core::{assets, Motion};

fn version(i: usize) -> String {
    let mut m = Motion::from_json(assets::WAVE_JSON).unwrap();
    m.keyframes[1].pos[4] = 0.001 * i as f64;
    m.to_canonical_json()
}

fn temp_files(dir: &std::path::Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains(".tmp-"))
        .count()
}

#[test]
fn crash_at_any_stage_leaves_old_or_new() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wave.json");
    MotionStore::open(dir.path()).unwrap().put("wave", &version(0), Precondition::None).unwrap();
    let mut on_disk = version(0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    for i in 1..=200 {
        let fault = match rng.random_range(0..5) {
            4 => None,
            k => Some(FAULT_POINTS[k]),
        };
        let store = MotionStore::open(dir.path()).unwrap();
        assert_eq!(temp_files(dir.path()), 0);
        assert_eq!(*store.get("wave").unwrap().0, on_disk);
        let store = store.with_fault_hook(Arc::new(move |p: FaultPoint, _: &str| {
            if Some(p) == fault {
                Err(std::io::Error::other("simulated crash"))
            } else {
                Ok(())
            }
        }));
        let new = version(i);
        let result = store.put("wave", &new, Precondition::None);
        assert_eq!(result.is_err(), fault.is_some());
        drop(store);

        let bytes = std::fs::read_to_string(&path).unwrap();
        let expect_new = matches!(fault, None | Some(FaultPoint::Renamed));
        assert_eq!(bytes, if expect_new { new.clone() } else { on_disk.clone() }, "iteration {i}, fault {fault:?}");
        on_disk = bytes;
    }
}

#[test]
fn readers_never_see_torn_documents() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(MotionStore::open(dir.path()).unwrap());
    store.put("wave", &version(0), Precondition::None).unwrap();
    let valid: Vec<String> = (0..100).map(version).collect();
    let writer = {
        let store = store.clone();
        let valid = valid.clone();
        std::thread::spawn(move || {
            for v in &valid {
                store.put("wave", v, Precondition::None).unwrap();
            }
        })
    };
    let path = dir.path().join("wave.json");
    while !writer.is_finished() {
        let (doc, _) = store.get("wave").unwrap();
        assert!(valid.contains(&doc));
        let file = std::fs::read_to_string(&path).unwrap();
        assert!(valid.contains(&file));
    }
    writer.join().unwrap();
}

#[test]
fn writes_to_different_names_proceed_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(MotionStore::open(dir.path()).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|t| {
            let store = store.clone();
            std::thread::spawn(move || {
                let mut m = Motion::from_json(assets::WAVE_JSON).unwrap();
                m.name = format!("w{t}");
                for i in 0..20 {
                    m.keyframes[1].pos[4] = 0.01 * i as f64;
                    store.put(&m.name.clone(), &m.to_canonical_json(), Precondition::None).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let reopened = MotionStore::open(dir.path()).unwrap();
    assert_eq!(reopened.names().len(), 8);
    for name in reopened.names() {
        assert_eq!(reopened.get(&name).unwrap().0, store.get(&name).unwrap().0);
    }
}

use pinet_core::nn::{l1_loss, linear, relu, Tensor2};
use pinet_core::pinet::gradsuite::random_scene;
use pinet_core::pinet::{param_count, train_with, Architecture};
use pinet_core::skeleton::{NormStats, Person, Pose, Scene};
use pinet_core::{Checkpoint, ModelConfig, OrderMode, PiNet, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> ModelConfig {
    ModelConfig {
        num_joints: 5,
        hidden: 6,
        gru_layers: 2,
        mlp_hidden: vec![8, 7],
        ..Default::default()
    }
}

fn scene(j: usize, n: usize, seed: u64) -> (Scene, NormStats) {
    random_scene(j, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_tensor(r: usize, c: usize, rng: &mut impl Rng) -> Tensor2 {
    Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn max_diff(a: &Pose, b: &Pose) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn zero_attention_is_uniform() {
    let net = PiNet::zeroed(&small()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let emb = random_tensor(4, 12, &mut rng);
    let w = net.attention_weights(&emb).unwrap();
    assert!(w.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    let u = pinet_core::pinet::apply_attention(&w, &emb).unwrap();
    for r in 0..4 {
        for c in 0..12 {
            let mean = (0..4).map(|m| emb.get(m, c)).sum::<f64>() / 4.0;
            assert!((u.get(r, c) - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..20 {
        let net = PiNet::init(&small(), seed).unwrap();
        let emb = random_tensor(5, 12, &mut rng);
        let mut scaled = emb.clone();
        scaled.scale(30.0);
        for e in [emb, scaled] {
            let w = net.attention_weights(&e).unwrap();
            for r in 0..5 {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(w.row(r).iter().all(|&v| v >= 0.0));
            }
        }
    }
}

#[test]
fn attention_matches_bilinear_oracle() {
    let net = PiNet::init(&small(), 3).unwrap();
    let arch = net.architecture();
    let att = arch.attention.unwrap();
    let (a, b) = (net.store().value(att.a), net.store().value(att.b));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let emb = random_tensor(3, 12, &mut rng);
    let w = net.attention_weights(&emb).unwrap();
    for n in 0..3 {
        let scores: Vec<f64> = (0..3)
            .map(|m| {
                let mut s = 0.0;
                for i in 0..12 {
                    let mut am = b.get(0, i);
                    for k in 0..12 {
                        am += a.get(i, k) * emb.get(m, k);
                    }
                    s += emb.get(n, i) * am;
                }
                s
            })
            .collect();
        let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
        for m in 0..3 {
            assert!((w.get(n, m) - (scores[m] - mx).exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn head_is_shared_across_rows() {
    let net = PiNet::init(&small(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_tensor(3, 12, &mut rng);
    let x = random_tensor(3, 15, &mut rng);
    let all = net.head(&u, &x).unwrap();
    for r in 0..3 {
        let one = net.head(&u.slice_rows(r, r + 1), &x.slice_rows(r, r + 1)).unwrap();
        for (a, b) in one.row(0).iter().zip(all.row(r)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    // chained linear oracle
    let arch = net.architecture();
    let mut h = u.clone();
    for (l, &(w, b)) in arch.mlp.iter().enumerate() {
        let z = linear(&h, net.store(), w, b).unwrap();
        h = if l + 1 < arch.mlp.len() { relu(&z) } else { z };
    }
    assert!(h.data().iter().zip(all.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    let zero = PiNet::zeroed(&small()).unwrap();
    assert!(zero.head(&u, &x).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn refine_person_is_restriction_of_forward_train() {
    let configs = [
        (5, small()),
        (6, ModelConfig { use_attention: false, ..small() }),
        (7, ModelConfig { bidirectional: false, predict_residual: true, ..small() }),
        (11, ModelConfig { center_poses: true, predict_residual: true, ..small() }),
    ];
    for (seed, cfg) in configs {
        let net = PiNet::init(&cfg, seed).unwrap();
        for n_persons in 1..=4 {
            let (s, stats) = scene(5, n_persons, seed * 10 + n_persons as u64);
            for n in 0..n_persons {
                let (all, _) = net.forward_train(&s, n, &stats).unwrap();
                let one = net.refine_person(&s, n, &stats).unwrap();
                assert!(max_diff(&one, &all[n]) <= 1e-9 * 5000.0, "{}", max_diff(&one, &all[n]));
            }
        }
    }
}

#[test]
fn refine_scene_is_permutation_invariant() {
    for cfg in [small(), ModelConfig { center_poses: true, ..small() }] {
        let net = PiNet::init(&cfg, 8).unwrap();
        let (s, stats) = scene(5, 4, 8);
        let base = net.refine_scene(&s, &stats).unwrap();
        for perm in [[1, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1]] {
            let p = s.permuted(&perm).unwrap();
            let out = net.refine_scene(&p, &stats).unwrap();
            for (k, &old) in perm.iter().enumerate() {
                assert_eq!(p.persons()[k].id, s.persons()[old].id);
                assert!(max_diff(&out[k], &base[old]) < 1e-9);
            }
        }
    }
}

#[test]
fn centered_model_is_translation_equivariant() {
    let cfg = ModelConfig {
        center_poses: true,
        ..small()
    };
    let net = PiNet::init(&cfg, 12).unwrap();
    let (s, stats) = scene(5, 3, 12);
    let base = net.refine_scene(&s, &stats).unwrap();
    let t = [730.0, -45.0, 1210.0];
    let persons = s
        .persons()
        .iter()
        .map(|p| Person {
            id: p.id,
            pose: p.pose.translated(t),
        })
        .collect();
    let moved = Scene::new(persons, None).unwrap();
    for (a, b) in net.refine_scene(&moved, &stats).unwrap().iter().zip(&base) {
        assert!(max_diff(a, &b.translated(t)) < 1e-9);
    }

    let plain = PiNet::init(&small(), 12).unwrap();
    let a = plain.refine_person(&moved, 0, &stats).unwrap();
    let b = plain.refine_person(&s, 0, &stats).unwrap().translated(t);
    assert!(max_diff(&a, &b) > 1e-6);
}

#[test]
fn centered_stats_describe_centered_poses() {
    let cfg = ModelConfig {
        center_poses: true,
        ..small()
    };
    let net = PiNet::zeroed(&cfg).unwrap();
    let (s, _) = scene(5, 4, 13);
    let stats = net.architecture().input_stats(s.poses()).unwrap();
    for c in 0..3 {
        let mean: f64 = (0..5).map(|j| stats.mean[3 * j + c]).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-9);
    }
}

#[test]
fn single_person_depends_only_on_own_pose() {
    let net = PiNet::init(&small(), 9).unwrap();
    let (s, stats) = scene(5, 3, 9);
    for part in s.split_persons() {
        let a = net.refine_person(&part, 0, &stats).unwrap();
        let b = net.refine_scene(&part, &stats).unwrap();
        assert_eq!(b, vec![a]);
    }
}

#[test]
fn residual_zero_head_is_identity() {
    for center_poses in [false, true] {
        residual_identity(ModelConfig {
            predict_residual: true,
            center_poses,
            ..small()
        });
    }
}

fn residual_identity(cfg: ModelConfig) {
    let mut net = PiNet::init(&cfg, 10).unwrap();
    let head: Vec<_> = net.architecture().mlp.iter().flat_map(|&(w, b)| [w, b]).collect();
    for id in head {
        net.store_mut().get_mut(id).value.fill(0.0);
    }
    let (s, stats) = scene(5, 3, 10);
    let (refined, loss) = net.forward_train(&s, 1, &stats).unwrap();
    for (r, p) in refined.iter().zip(s.poses()) {
        assert!(max_diff(r, p) < 1e-9);
    }
    let gt = s.gt().unwrap();
    let flat = |v: &[Pose]| Tensor2::from_rows(&v.iter().map(Pose::flatten).collect::<Vec<_>>()).unwrap();
    let inputs: Vec<Pose> = s.poses().cloned().collect();
    assert!((loss - l1_loss(&flat(&inputs), &flat(gt)).unwrap()).abs() < 1e-9);
    assert!(max_diff(&net.refine_person(&s, 2, &stats).unwrap(), s.pose(2)) < 1e-9);
}

#[test]
fn loss_is_flat_mean_abs() {
    let net = PiNet::init(&small(), 11).unwrap();
    let (s, stats) = scene(5, 2, 11);
    let (refined, loss) = net.forward_train(&s, 0, &stats).unwrap();
    let gt = s.gt().unwrap();
    let mut sum = 0.0;
    for (r, g) in refined.iter().zip(gt) {
        for (a, b) in r.flatten().iter().zip(g.flatten()) {
            sum += (a - b).abs();
        }
    }
    assert!((loss - sum / 30.0).abs() < 1e-9);
    let exact = s.clone().with_gt(Some(refined)).unwrap();
    assert!(net.forward_train(&exact, 0, &stats).unwrap().1 < 1e-9);
}

#[test]
fn without_attention_is_embed_then_head() {
    let cfg = ModelConfig {
        use_attention: false,
        ..small()
    };
    let net = PiNet::init(&cfg, 12).unwrap();
    let (s, stats) = scene(5, 3, 12);
    let arch = net.architecture();
    let ord = arch.ordering(&s, 0).unwrap();
    let x = arch.ordered_inputs(&s, &ord, &stats).unwrap();
    let direct = net.head(&net.embed(&x).unwrap(), &x).unwrap();
    assert_eq!(arch.forward(net.store(), &x).unwrap().output, direct);
}

#[test]
fn unidirectional_type_checks() {
    let cfg = ModelConfig {
        bidirectional: false,
        ..small()
    };
    assert_eq!(cfg.embed_dim(), cfg.hidden);
    let net = PiNet::init(&cfg, 13).unwrap();
    let (s, stats) = scene(5, 3, 13);
    assert_eq!(net.refine_scene(&s, &stats).unwrap().len(), 3);
}

#[test]
fn param_counts() {
    let default = ModelConfig::default();
    let n = param_count(&default);
    assert!((3.07e6..=3.75e6).contains(&(n as f64)), "{n}");
    let (_, store) = Architecture::build(&default).unwrap();
    assert_eq!(store.num_scalars(), n);
    let toy = ModelConfig {
        num_joints: 2,
        hidden: 4,
        gru_layers: 1,
        mlp_hidden: vec![4, 4],
        ..Default::default()
    };
    // GRU: 2 directions x (3·4·(6 + 4) + 3·4); attention 8·8 + 8; head 8·4+4 + 4·4+4 + 4·6+6
    assert_eq!(param_count(&toy), 2 * (120 + 12) + 72 + 36 + 20 + 30);
    assert_eq!(param_count(&toy), 422);
    let half = ModelConfig {
        hidden: 128,
        ..default.clone()
    };
    assert!(param_count(&half) < n);
    for cfg in [
        ModelConfig { use_attention: false, ..default.clone() },
        ModelConfig { bidirectional: false, ..default.clone() },
        ModelConfig { gru_layers: 4, ..default.clone() },
    ] {
        assert_eq!(Architecture::build(&cfg).unwrap().1.num_scalars(), param_count(&cfg));
    }
}

#[test]
fn order_modes() {
    let root = |x: f64| Pose::new(vec![[x, 0.0, 0.0], [x, 1.0, 0.0]]).unwrap();
    let persons = [0.0, 5000.0, 1000.0, 3000.0]
        .iter()
        .enumerate()
        .map(|(i, &x)| Person { id: 10 + i as u64, pose: root(x) })
        .collect();
    let s = Scene::new(persons, None).unwrap();
    let cfg = |order| ModelConfig { num_joints: 2, hidden: 2, gru_layers: 1, mlp_hidden: vec![2], order, ..Default::default() };
    let perm = |order| PiNet::zeroed(&cfg(order)).unwrap().architecture().ordering(&s, 0).unwrap().perm().to_vec();
    assert_eq!(perm(OrderMode::Intuitive), vec![0, 2, 3, 1]);
    assert_eq!(perm(OrderMode::Reverse), vec![0, 1, 3, 2]);
    let r = perm(OrderMode::Random);
    assert_eq!(r[0], 0);
    assert_eq!(r, perm(OrderMode::Random));
    let mut sorted = r.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2, 3]);
}

fn tiny_train(epochs: usize, seed: u64) -> (Checkpoint, Vec<pinet_core::pinet::EpochRecord>) {
    let scenes: Vec<Scene> = (0..6).map(|i| scene(5, 2 + i % 2, 100 + i as u64).0).collect();
    let tcfg = TrainConfig {
        epochs,
        seed,
        lr_init: 1e-3,
        ..Default::default()
    };
    train_with(&scenes, &small(), &tcfg, |_| {}).unwrap()
}

#[test]
fn zero_epochs_is_initialization() {
    let (ck, records) = tiny_train(0, 5);
    assert!(records.is_empty());
    assert_eq!(ck.step, 0);
    assert_eq!(ck.model.store().iter().map(|p| &p.value).collect::<Vec<_>>(), PiNet::init(&small(), 5).unwrap().store().iter().map(|p| &p.value).collect::<Vec<_>>());
}

#[test]
fn training_is_deterministic() {
    let (a, ra) = tiny_train(3, 7);
    let (b, rb) = tiny_train(3, 7);
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert_eq!(ra.iter().map(|r| r.mean_loss.to_bits()).collect::<Vec<_>>(), rb.iter().map(|r| r.mean_loss.to_bits()).collect::<Vec<_>>());
    let (c, _) = tiny_train(3, 8);
    assert_ne!(a.to_bytes().unwrap(), c.to_bytes().unwrap());
}

#[test]
fn checkpoint_round_trips_through_disk() {
    let (ck, _) = tiny_train(1, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.to_bytes().unwrap(), ck.to_bytes().unwrap());
    let (s, _) = scene(5, 3, 1);
    assert_eq!(back.model.refine_scene(&s, &back.stats).unwrap(), ck.model.refine_scene(&s, &ck.stats).unwrap());
}

#[test]
fn single_scene_overfits() {
    // loss before each of the first 50 updates on one scene
    let mut monotone = 0;
    for seed in 0..10u64 {
        let (s, _) = scene(5, 3, 200 + seed);
        let tcfg = TrainConfig {
            epochs: 50,
            batch_size: 1,
            seed,
            ..Default::default()
        };
        let cfg = ModelConfig { order: OrderMode::Intuitive, ..small() };
        // one scene, fixed person of interest: a constant objective
        let single = Scene::new(vec![s.persons()[0].clone()], Some(vec![s.gt().unwrap()[0].clone()])).unwrap();
        let (_, rec) = train_with(&[single], &cfg, &tcfg, |_| {}).unwrap();
        if rec.windows(2).all(|w| w[1].mean_loss < w[0].mean_loss) {
            monotone += 1;
        }
    }
    assert!(monotone >= 9, "{monotone}/10");
}

//! Finite-difference checks of every differentiable component and of the
//! end-to-end training loss.

use rand::{Rng, SeedableRng};

use super::model::{accumulate_gradients, attention_backward, attention_scores, train_pass, Architecture, AttentionParams};
use super::ModelConfig;
use crate::error::Result;
use crate::nn::gradcheck::{grad_check, Evaluation, GradCheckConfig, GradCheckReport, Objective};
use crate::nn::layers::{l1_loss, l1_loss_grad, linear, linear_backward, relu, relu_backward, softmax_rows, softmax_rows_backward};
use crate::nn::param::Rng64;
use crate::nn::{GruStack, InitKind, Param, ParamId, ParameterStore, Tensor2};
use crate::skeleton::{compute_stats, NormStats, Person, Pose, Scene};

pub const COMPONENTS: &[&str] = &[
    "linear+l1",
    "softmax_rows",
    "l1_loss",
    "gru_cell",
    "bi_gru_stack",
    "attention",
    "head",
    "pinet_end_to_end",
];

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    /// Architecture of the end-to-end check.
    pub model: ModelConfig,
    pub seeds: Vec<u64>,
    pub check: GradCheckConfig,
    pub threshold: f64,
    /// Persons in the end-to-end scene.
    pub persons: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            seeds: vec![1, 2, 3],
            check: GradCheckConfig::default(),
            threshold: 1e-5,
            persons: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComponentResult {
    pub component: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub results: Vec<ComponentResult>,
    pub threshold: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.report.max_rel_err < self.threshold)
    }

    /// Largest relative error per component, in check order.
    pub fn per_component(&self) -> Vec<(&'static str, f64)> {
        let mut out: Vec<(&'static str, f64)> = Vec::new();
        for r in &self.results {
            match out.iter_mut().find(|(c, _)| *c == r.component) {
                Some((_, e)) => *e = e.max(r.report.max_rel_err),
                None => out.push((r.component, r.report.max_rel_err)),
            }
        }
        out
    }

    pub fn worst(&self) -> Option<&ComponentResult> {
        self.results
            .iter()
            .max_by(|a, b| a.report.max_rel_err.total_cmp(&b.report.max_rel_err))
    }
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        for &component in COMPONENTS {
            let check = GradCheckConfig {
                seed,
                ..cfg.check.clone()
            };
            let report = check_component(component, seed, cfg, &check)?;
            results.push(ComponentResult { component, seed, report });
        }
    }
    Ok(SuiteReport {
        results,
        threshold: cfg.threshold,
    })
}

fn check_component(name: &str, seed: u64, cfg: &SuiteConfig, check: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = Rng64::seed_from_u64(seed);
    match name {
        "linear+l1" => {
            let mut s = ParameterStore::new();
            let x = s.add(random_param("x", 5, 7, 1.0, &mut rng));
            let w = s.add(random_param("w", 7, 6, 0.5, &mut rng));
            let b = s.add(random_param("b", 1, 6, 0.5, &mut rng));
            let obj = LinearL1 {
                x,
                w,
                b,
                target: random_tensor(5, 6, 1.0, &mut rng),
            };
            grad_check(&obj, &mut s, check)
        }
        "softmax_rows" => {
            let mut s = ParameterStore::new();
            let x = s.add(random_param("scores", 4, 4, 2.0, &mut rng));
            let obj = Softmax {
                x,
                weights: random_tensor(4, 4, 1.0, &mut rng),
            };
            grad_check(&obj, &mut s, check)
        }
        "l1_loss" => {
            let mut s = ParameterStore::new();
            let x = s.add(random_param("pred", 6, 9, 1.0, &mut rng));
            let obj = L1 {
                x,
                target: random_tensor(6, 9, 1.0, &mut rng),
            };
            grad_check(&obj, &mut s, check)
        }
        "gru_cell" | "bi_gru_stack" => {
            let mut s = ParameterStore::new();
            let (layers, bidir, hidden) = if name == "gru_cell" { (1, false, 5) } else { (2, true, 3) };
            let stack = GruStack::register(&mut s, "rnn", 4, hidden, layers, bidir);
            for p in s.iter_mut() {
                p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.7..0.7));
            }
            let x = s.add(random_param("input", 3, 4, 1.0, &mut rng));
            let weights = random_tensor(3, stack.output_dim(), 1.0, &mut rng);
            grad_check(&Recurrent { stack, x, weights }, &mut s, check)
        }
        "attention" => {
            let mut s = ParameterStore::new();
            let x = s.add(random_param("embedding", 3, 6, 1.0, &mut rng));
            let att = AttentionParams {
                a: s.add(random_param("att.a", 6, 6, 0.5, &mut rng)),
                b: s.add(random_param("att.b", 1, 6, 0.5, &mut rng)),
            };
            let weights = random_tensor(3, 6, 1.0, &mut rng);
            grad_check(&Attention { x, att, weights }, &mut s, check)
        }
        "head" => {
            let mut s = ParameterStore::new();
            let x = s.add(random_param("updated", 3, 6, 1.0, &mut rng));
            let dims = [6, 5, 4, 6];
            let layers = dims
                .windows(2)
                .enumerate()
                .map(|(l, d)| {
                    (
                        s.add(random_param(&format!("w{l}"), d[0], d[1], 0.7, &mut rng)),
                        s.add(random_param(&format!("b{l}"), 1, d[1], 0.3, &mut rng)),
                    )
                })
                .collect();
            let target = random_tensor(3, 6, 1.0, &mut rng);
            grad_check(&Head { x, layers, target }, &mut s, check)
        }
        "pinet_end_to_end" => {
            let (arch, mut store) = Architecture::build(&cfg.model)?;
            store.initialize(seed);
            // break the zero-bias symmetry so bias gradients are exercised
            for p in store.iter_mut().filter(|p| p.init == InitKind::Zeros) {
                p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
            }
            let (scene, stats) = random_scene(cfg.model.num_joints, cfg.persons, &mut rng)?;
            let n = rng.random_range(0..cfg.persons);
            let obj = EndToEnd {
                arch: &arch,
                scene: &scene,
                stats: &stats,
                n,
            };
            grad_check(&obj, &mut store, check)
        }
        other => unreachable!("unknown component {other}"),
    }
}

fn random_tensor(r: usize, c: usize, scale: f64, rng: &mut impl Rng) -> Tensor2 {
    Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).expect("shape")
}

fn random_param(name: &str, r: usize, c: usize, scale: f64, rng: &mut impl Rng) -> Param {
    Param::new(name, random_tensor(r, c, scale, rng), InitKind::FanIn)
}

/// A scene of random poses around spread-out roots, with noisy ground truth.
pub fn random_scene(num_joints: usize, persons: usize, rng: &mut impl Rng) -> Result<(Scene, NormStats)> {
    let mut people = Vec::with_capacity(persons);
    let mut gt = Vec::with_capacity(persons);
    for id in 0..persons {
        let root = [rng.random_range(-2000.0..2000.0), 0.0, rng.random_range(3000.0..6000.0)];
        let joints: Vec<[f64; 3]> = (0..num_joints)
            .map(|_| {
                [
                    root[0] + rng.random_range(-400.0..400.0),
                    root[1] + rng.random_range(-800.0..800.0),
                    root[2] + rng.random_range(-300.0..300.0),
                ]
            })
            .collect();
        let truth = joints
            .iter()
            .map(|p| [p[0] + rng.random_range(-80.0..80.0), p[1] + rng.random_range(-80.0..80.0), p[2] + rng.random_range(-80.0..80.0)])
            .collect();
        people.push(Person {
            id: id as u64,
            pose: Pose::new(joints)?,
        });
        gt.push(Pose::new(truth)?);
    }
    let scene = Scene::new(people, Some(gt))?;
    let stats = compute_stats(scene.poses())?;
    // per-scene stats from 3 persons are too tight; widen them
    let stats = NormStats::new(stats.mean, stats.std.iter().map(|s| s + 300.0).collect())?;
    Ok((scene, stats))
}

fn signs(a: &Tensor2, b: &Tensor2) -> Vec<bool> {
    a.data().iter().zip(b.data()).map(|(x, y)| x > y).collect()
}

fn weighted_sum(out: &Tensor2, weights: &Tensor2) -> f64 {
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

struct LinearL1 {
    x: ParamId,
    w: ParamId,
    b: ParamId,
    target: Tensor2,
}

impl Objective for LinearL1 {
    fn evaluate(&self, s: &ParameterStore) -> Result<Evaluation> {
        let y = linear(s.value(self.x), s, self.w, self.b)?;
        Ok(Evaluation {
            value: l1_loss(&y, &self.target)?,
            kinks: signs(&y, &self.target),
        })
    }

    fn gradient(&self, s: &mut ParameterStore) -> Result<f64> {
        let x = s.value(self.x).clone();
        let y = linear(&x, s, self.w, self.b)?;
        let dx = linear_backward(s, self.w, self.b, &x, &l1_loss_grad(&y, &self.target));
        s.grad_mut(self.x).add_assign(&dx);
        l1_loss(&y, &self.target)
    }
}

struct Softmax {
    x: ParamId,
    weights: Tensor2,
}

impl Objective for Softmax {
    fn evaluate(&self, s: &ParameterStore) -> Result<Evaluation> {
        Ok(Evaluation::smooth(weighted_sum(&softmax_rows(s.value(self.x)), &self.weights)))
    }

    fn gradient(&self, s: &mut ParameterStore) -> Result<f64> {
        let y = softmax_rows(s.value(self.x));
        let dx = softmax_rows_backward(&y, &self.weights);
        s.grad_mut(self.x).add_assign(&dx);
        Ok(weighted_sum(&y, &self.weights))
    }
}

struct L1 {
    x: ParamId,
    target: Tensor2,
}

impl Objective for L1 {
    fn evaluate(&self, s: &ParameterStore) -> Result<Evaluation> {
        Ok(Evaluation {
            value: l1_loss(s.value(self.x), &self.target)?,
            kinks: signs(s.value(self.x), &self.target),
        })
    }

    fn gradient(&self, s: &mut ParameterStore) -> Result<f64> {
        let g = l1_loss_grad(s.value(self.x), &self.target);
        s.grad_mut(self.x).add_assign(&g);
        l1_loss(s.value(self.x), &self.target)
    }
}

struct Recurrent {
    stack: GruStack,
    x: ParamId,
    weights: Tensor2,
}

impl Objective for Recurrent {
    fn evaluate(&self, s: &ParameterStore) -> Result<Evaluation> {
        let (out, _) = self.stack.forward(s, s.value(self.x))?;
        Ok(Evaluation::smooth(weighted_sum(&out, &self.weights)))
    }

    fn gradient(&self, s: &mut ParameterStore) -> Result<f64> {
        let x = s.value(self.x).clone();
        let (out, cache) = self.stack.forward(s, &x)?;
        let dx = self.stack.backward(s, &cache, &self.weights);
        s.grad_mut(self.x).add_assign(&dx);
        Ok(weighted_sum(&out, &self.weights))
    }
}

struct Attention {
    x: ParamId,
    att: AttentionParams,
    weights: Tensor2,
}

impl Attention {
    fn forward(&self, s: &ParameterStore) -> Result<(Tensor2, Tensor2, Tensor2)> {
        let e = s.value(self.x);
        let (scores, rhs) = attention_scores(s, &self.att, e)?;
        let p = softmax_rows(&scores);
        let u = p.matmul(e)?;
        Ok((u, p, rhs))
    }
}

impl Objective for Attention {
    fn evaluate(&self, s: &ParameterStore) -> Result<Evaluation> {
        Ok(Evaluation::smooth(weighted_sum(&self.forward(s)?.0, &self.weights)))
    }

    fn gradient(&self, s: &mut ParameterStore) -> Result<f64> {
        let (u, p, rhs) = self.forward(s)?;
        let e = s.value(self.x).clone();
        let de = attention_backward(s, &self.att, &e, &rhs, &p, &self.weights);
        s.grad_mut(self.x).add_assign(&de);
        Ok(weighted_sum(&u, &self.weights))
    }
}

struct Head {
    x: ParamId,
    layers: Vec<(ParamId, ParamId)>,
    target: Tensor2,
}

impl Head {
    fn forward(&self, s: &ParameterStore) -> Result<(Tensor2, Vec<Tensor2>, Vec<Tensor2>)> {
        let mut h = s.value(self.x).clone();
        let (mut ins, mut pres) = (Vec::new(), Vec::new());
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let z = linear(&h, s, w, b)?;
            ins.push(h);
            h = if l + 1 < self.layers.len() {
                let a = relu(&z);
                pres.push(z);
                a
            } else {
                z
            };
        }
        Ok((h, ins, pres))
    }
}

impl Objective for Head {
    fn evaluate(&self, s: &ParameterStore) -> Result<Evaluation> {
        let (y, _, pres) = self.forward(s)?;
        let mut kinks = signs(&y, &self.target);
        kinks.extend(pres.iter().flat_map(|z| z.data().iter().map(|&v| v > 0.0)));
        Ok(Evaluation {
            value: l1_loss(&y, &self.target)?,
            kinks,
        })
    }

    fn gradient(&self, s: &mut ParameterStore) -> Result<f64> {
        let (y, ins, pres) = self.forward(s)?;
        let mut d = l1_loss_grad(&y, &self.target);
        for (l, &(w, b)) in self.layers.iter().enumerate().rev() {
            if l + 1 < self.layers.len() {
                d = relu_backward(&pres[l], &d);
            }
            d = linear_backward(s, w, b, &ins[l], &d);
        }
        s.grad_mut(self.x).add_assign(&d);
        l1_loss(&y, &self.target)
    }
}

struct EndToEnd<'a> {
    arch: &'a Architecture,
    scene: &'a Scene,
    stats: &'a NormStats,
    n: usize,
}

impl Objective for EndToEnd<'_> {
    fn evaluate(&self, s: &ParameterStore) -> Result<Evaluation> {
        let pass = train_pass(self.arch, s, self.scene, self.n, self.stats)?;
        let mut kinks = signs(&pass.predictions, &pass.targets);
        kinks.extend(pass.cache.kinks());
        Ok(Evaluation {
            value: pass.loss,
            kinks,
        })
    }

    fn gradient(&self, s: &mut ParameterStore) -> Result<f64> {
        accumulate_gradients(self.arch, s, self.scene, self.n, self.stats, 1.0)
    }
}

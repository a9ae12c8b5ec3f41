//! Teacher–student protocol: a network trained on one half of the data
//! relabels the other half with its output probabilities, and a second
//! network is trained to reproduce them. Whenever the student is at least as
//! wide as the teacher, the student loss has a known zero ground state.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ClassificationDataset, NeuralNet, NeuralNetSpec};
use crate::numcore::{lbfgs_minimize, LbfgsConfig, Objective, ParamVector};
use crate::rng;

/// Mean over items of the squared difference between the student's output
/// probabilities and fixed target probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentLoss {
    pub spec: NeuralNetSpec,
    pub inputs: ClassificationDataset,
    /// Row-major, one row of `spec.n_out` probabilities per item.
    pub targets: Vec<f64>,
}

impl StudentLoss {
    pub fn new(spec: NeuralNetSpec, inputs: ClassificationDataset, targets: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if inputs.n_in != spec.n_in {
            return Err(Error::DimensionMismatch { expected: spec.n_in, got: inputs.n_in });
        }
        if targets.len() != inputs.len() * spec.n_out {
            return Err(Error::DimensionMismatch { expected: inputs.len() * spec.n_out, got: targets.len() });
        }
        Ok(Self { spec, inputs, targets })
    }
}

/// Student loss and gradient.
pub fn student_loss(loss: &StudentLoss, w: &ParamVector) -> (f64, ParamVector) {
    let s = &loss.spec;
    let n = loss.inputs.len().max(1) as f64;
    let mut e = 0.0;
    let mut g = ParamVector::zeros(s.n_params());
    let mut back = vec![0.0; s.n_hidden];
    let mut a = vec![0.0; s.n_out];
    for d in 0..loss.inputs.len() {
        let x = loss.inputs.row(d);
        let t = &loss.targets[d * s.n_out..(d + 1) * s.n_out];
        let (h, lp) = s.forward(w, x);
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let mut pa = 0.0;
        for i in 0..s.n_out {
            let diff = p[i] - t[i];
            e += diff * diff;
            a[i] = 2.0 * diff;
            pa += p[i] * a[i];
        }
        back.iter_mut().for_each(|b| *b = 0.0);
        for i in 0..s.n_out {
            let delta = p[i] * (a[i] - pa);
            g[s.bo(i)] += delta;
            for j in 0..s.n_hidden {
                g[s.w1(i, j)] += delta * h[j];
                back[j] += delta * w[s.w1(i, j)];
            }
        }
        for j in 0..s.n_hidden {
            let gj = back[j] * (1.0 - h[j] * h[j]);
            g[s.bh(j)] += gj;
            for k in 0..s.n_in {
                g[s.w2(j, k)] += gj * x[k];
            }
        }
    }
    (e / n, g / n)
}

impl Objective for StudentLoss {
    fn dim(&self) -> usize {
        self.spec.n_params()
    }

    fn energy_gradient(&self, w: &ParamVector) -> (f64, ParamVector) {
        student_loss(self, w)
    }
}

/// Copies teacher weights into a student with at least as many hidden nodes;
/// the extra nodes get zero weights throughout.
pub fn embed_teacher(teacher: &NeuralNetSpec, w: &ParamVector, student: &NeuralNetSpec) -> Result<ParamVector> {
    if student.n_hidden < teacher.n_hidden || student.n_in != teacher.n_in || student.n_out != teacher.n_out {
        return Err(Error::Precondition("student cannot embed the teacher".into()));
    }
    let mut out = ParamVector::zeros(student.n_params());
    for j in 0..teacher.n_hidden {
        for k in 0..teacher.n_in {
            out[student.w2(j, k)] = w[teacher.w2(j, k)];
        }
        out[student.bh(j)] = w[teacher.bh(j)];
        for i in 0..teacher.n_out {
            out[student.w1(i, j)] = w[teacher.w1(i, j)];
        }
    }
    for i in 0..teacher.n_out {
        out[student.bo(i)] = w[teacher.bo(i)];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherStudentConfig {
    /// Teacher training (LBFGS on the cross-entropy of half A).
    pub teacher_lbfgs: LbfgsConfig,
    /// Full-batch gradient-descent step for the student.
    pub learning_rate: f64,
    pub n_steps: usize,
    /// Loss is recorded every this many steps (and at the end).
    pub record_every: usize,
    /// Half-width of the uniform initial weights.
    pub init_scale: f64,
}

impl Default for TeacherStudentConfig {
    fn default() -> Self {
        Self {
            teacher_lbfgs: LbfgsConfig { max_iters: 2000, rms_tol: 1e-5, ..Default::default() },
            learning_rate: 0.5,
            n_steps: 5000,
            record_every: 50,
            init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherStudentReport {
    pub teacher_hidden: usize,
    pub student_hidden: usize,
    pub student_scale: f64,
    pub seed: u64,
    pub teacher_weights: ParamVector,
    pub teacher_cost: f64,
    /// Student loss at the embedded teacher weights, when the student is
    /// wide enough to hold them.
    pub loss_at_teacher: Option<f64>,
    /// (step, loss) pairs.
    pub trace: Vec<(usize, f64)>,
    pub final_loss: f64,
}

impl TeacherStudentReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (k, l) in &self.trace {
            s.push_str(&format!("{k},{l}\n"));
        }
        s
    }
}

fn random_weights(n: usize, scale: f64, r: &mut rng::Rng) -> ParamVector {
    ParamVector::from_fn(n, |_, _| r.random_range(-scale..scale))
}

/// Runs the four-step protocol on `data`: split in half, train the teacher
/// (`spec`, with λ forced to 0) on the first half, relabel the second half
/// with its output probabilities and train a student of width
/// round(`student_scale` × teacher width) from random weights.
pub fn teacher_student(
    spec: &NeuralNetSpec,
    data: &ClassificationDataset,
    student_scale: f64,
    seed: u64,
    cfg: &TeacherStudentConfig,
) -> Result<TeacherStudentReport> {
    if !(student_scale > 0.0) || !(cfg.learning_rate > 0.0) || cfg.record_every == 0 {
        return Err(Error::Precondition("student_scale, learning_rate and record_every must be positive".into()));
    }
    let teacher_spec = NeuralNetSpec { lambda: 0.0, ..*spec };
    let student_hidden = ((student_scale * spec.n_hidden as f64).round() as usize).max(1);
    let student_spec = NeuralNetSpec { n_hidden: student_hidden, ..teacher_spec };
    let half = data.len() / 2;
    if half == 0 {
        return Err(Error::Precondition("need at least two data items".into()));
    }
    let (part_a, part_b) = data.split(half, data.len() - half, seed)?;

    let teacher = NeuralNet::new(teacher_spec, part_a)?;
    let w0 = random_weights(teacher_spec.n_params(), cfg.init_scale, &mut rng::stream(seed, 1));
    let trained = lbfgs_minimize(&teacher, &w0, &cfg.teacher_lbfgs)?;
    let w_star = trained.final_point;

    let mut targets = Vec::with_capacity(part_b.len() * spec.n_out);
    for d in 0..part_b.len() {
        targets.extend(teacher_spec.probabilities(&w_star, part_b.row(d)));
    }
    let loss = StudentLoss::new(student_spec, part_b, targets)?;
    let loss_at_teacher = embed_teacher(&teacher_spec, &w_star, &student_spec).ok().map(|w| student_loss(&loss, &w).0);

    let mut w = random_weights(student_spec.n_params(), cfg.init_scale, &mut rng::stream(seed, 2));
    let mut trace = Vec::new();
    let mut e = 0.0;
    for step in 0..=cfg.n_steps {
        let (l, g) = student_loss(&loss, &w);
        e = l;
        if step % cfg.record_every == 0 || step == cfg.n_steps {
            trace.push((step, l));
        }
        if step < cfg.n_steps {
            w.axpy(-cfg.learning_rate, &g, 1.0);
        }
    }
    Ok(TeacherStudentReport {
        teacher_hidden: spec.n_hidden,
        student_hidden,
        student_scale,
        seed,
        teacher_weights: w_star,
        teacher_cost: trained.final_energy,
        loss_at_teacher,
        trace,
        final_loss: e,
    })
}

/// Hidden-node permutation of a weight vector: node `j` moves to `perm[j]`.
pub fn permute_hidden(spec: &NeuralNetSpec, w: &ParamVector, perm: &[usize]) -> ParamVector {
    let mut out = w.clone();
    for (j, &pj) in perm.iter().enumerate() {
        for k in 0..spec.n_in {
            out[spec.w2(pj, k)] = w[spec.w2(j, k)];
        }
        out[spec.bh(pj)] = w[spec.bh(j)];
        for i in 0..spec.n_out {
            out[spec.w1(i, pj)] = w[spec.w1(i, j)];
        }
    }
    out
}

//! Linear-chain inference over a dense score lattice.
//!
//! All recursions run in log space. Forbidden transitions are `-inf` entries
//! and propagate as exact zeros in the marginals.

/// Unnormalized log-potentials of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    len: usize,
    num_labels: usize,
    /// `len x num_labels`, row-major.
    emission: Vec<f64>,
    /// `num_labels x num_labels`, `transition[from * L + to]`.
    transition: Vec<f64>,
    /// Score of starting in each label.
    start: Vec<f64>,
}

impl Potentials {
    pub fn new(num_labels: usize, emission: Vec<f64>, transition: Vec<f64>, start: Vec<f64>) -> Self {
        assert!(num_labels > 0);
        assert_eq!(emission.len() % num_labels, 0, "emission rows");
        assert_eq!(transition.len(), num_labels * num_labels);
        assert_eq!(start.len(), num_labels);
        Potentials { len: emission.len() / num_labels, num_labels, emission, transition, start }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn emission(&self, t: usize, label: usize) -> f64 {
        self.emission[t * self.num_labels + label]
    }

    #[inline]
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.num_labels + to]
    }

    pub fn start(&self, label: usize) -> f64 {
        self.start[label]
    }

    /// Unnormalized log-score of a complete label path.
    pub fn path_score(&self, path: &[usize]) -> f64 {
        assert_eq!(path.len(), self.len);
        let mut score = 0.0;
        for (t, &y) in path.iter().enumerate() {
            score += if t == 0 { self.start(y) } else { self.transition(path[t - 1], y) };
            score += self.emission(t, y);
        }
        score
    }
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Best path and its score. Ties go to the lower label index, both at the
/// final position and in every back-pointer.
pub fn viterbi(p: &Potentials) -> (Vec<usize>, f64) {
    let (n, l) = (p.len, p.num_labels);
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut delta: Vec<f64> = (0..l).map(|y| p.start(y) + p.emission(0, y)).collect();
    let mut back = vec![0usize; n * l];
    let mut next = vec![0.0; l];
    for t in 1..n {
        for y in 0..l {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for (prev, &d) in delta.iter().enumerate() {
                let s = d + p.transition(prev, y);
                if s > best {
                    best = s;
                    arg = prev;
                }
            }
            next[y] = best + p.emission(t, y);
            back[t * l + y] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let (mut last, mut best) = (0, f64::NEG_INFINITY);
    for (y, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = y;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * l + path[t]];
    }
    (path, best)
}

/// Forward/backward tables and the log-partition function.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    len: usize,
    num_labels: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    pub log_z: f64,
}

impl ForwardBackward {
    pub fn compute(p: &Potentials) -> Self {
        let (n, l) = (p.len, p.num_labels);
        let mut alpha = vec![f64::NEG_INFINITY; n * l];
        let mut beta = vec![f64::NEG_INFINITY; n * l];
        if n == 0 {
            return ForwardBackward { len: 0, num_labels: l, alpha, beta, log_z: 0.0 };
        }
        for y in 0..l {
            alpha[y] = p.start(y) + p.emission(0, y);
        }
        for t in 1..n {
            let (done, rest) = alpha.split_at_mut(t * l);
            let prev = &done[(t - 1) * l..];
            for y in 0..l {
                rest[y] = log_sum_exp(prev.iter().enumerate().map(|(x, &a)| a + p.transition(x, y))) + p.emission(t, y);
            }
        }
        beta[(n - 1) * l..].fill(0.0);
        for t in (0..n - 1).rev() {
            let (head, tail) = beta.split_at_mut((t + 1) * l);
            let next = &tail[..l];
            for y in 0..l {
                head[t * l + y] =
                    log_sum_exp(next.iter().enumerate().map(|(z, &b)| p.transition(y, z) + p.emission(t + 1, z) + b));
            }
        }
        let log_z = log_sum_exp(alpha[(n - 1) * l..].iter().copied());
        ForwardBackward { len: n, num_labels: l, alpha, beta, log_z }
    }

    /// Log-marginal of label `y` at position `t`.
    #[inline]
    pub fn log_marginal(&self, t: usize, y: usize) -> f64 {
        let i = t * self.num_labels + y;
        let s = self.alpha[i] + self.beta[i];
        if s == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            s - self.log_z
        }
    }

    /// Log-marginal of the pair `(y_{t-1} = from, y_t = to)`, `t >= 1`.
    #[inline]
    pub fn log_pair_marginal(&self, p: &Potentials, t: usize, from: usize, to: usize) -> f64 {
        let l = self.num_labels;
        let s = self.alpha[(t - 1) * l + from] + p.transition(from, to) + p.emission(t, to) + self.beta[t * l + to];
        if s == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            s - self.log_z
        }
    }

    /// `len x num_labels` matrix of log-marginals.
    pub fn log_marginals(&self) -> Vec<Vec<f64>> {
        (0..self.len).map(|t| (0..self.num_labels).map(|y| self.log_marginal(t, y)).collect()).collect()
    }
}

/// Row-stochastic token marginals, computed as `exp` of the log-marginals.
pub fn marginals(p: &Potentials) -> Vec<Vec<f64>> {
    ForwardBackward::compute(p)
        .log_marginals()
        .into_iter()
        .map(|row| row.into_iter().map(f64::exp).collect())
        .collect()
}

//! Method of moving asymptotes (Svanberg), for
//! `min f0(x) + a0 z + Σ (c_i y_i + d_i y_i²/2)` s.t. `f_i(x) - a_i z - y_i ≤ 0`, `xmin ≤ x ≤ xmax`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmaParams {
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    /// Largest change of one variable per iteration, as a fraction of its range.
    pub move_limit: f64,
    /// Penalty `c_i` on the elastic constraint variables.
    pub c_penalty: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            move_limit: 0.2,
            c_penalty: 1000.0,
        }
    }
}

const ALBEFA: f64 = 0.1;
const RAA0: f64 = 1e-5;
const EPSIMIN: f64 = 1e-7;

/// Optimizer memory between iterations.
#[derive(Debug, Clone)]
pub struct Mma {
    pub params: MmaParams,
    n: usize,
    m: usize,
    xmin: Vec<f64>,
    xmax: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    iter: usize,
}

impl Mma {
    pub fn new(params: MmaParams, x0: &[f64], xmin: Vec<f64>, xmax: Vec<f64>, m: usize) -> Self {
        let n = x0.len();
        Self {
            params,
            n,
            m,
            xmin,
            xmax,
            xold1: x0.to_vec(),
            xold2: x0.to_vec(),
            low: vec![0.0; n],
            upp: vec![0.0; n],
            iter: 0,
        }
    }

    /// One outer update. `dfdx[i]` is the gradient of constraint `i`.
    pub fn update(&mut self, x: &[f64], df0dx: &[f64], fval: &[f64], dfdx: &[Vec<f64>]) -> Vec<f64> {
        let (n, m, p) = (self.n, self.m, self.params);
        self.iter += 1;
        let range: Vec<f64> = (0..n).map(|j| self.xmax[j] - self.xmin[j]).collect();

        if self.iter < 3 {
            for j in 0..n {
                self.low[j] = x[j] - p.asyinit * range[j];
                self.upp[j] = x[j] + p.asyinit * range[j];
            }
        } else {
            for j in 0..n {
                let zzz = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if zzz > 0.0 {
                    p.asyincr
                } else if zzz < 0.0 {
                    p.asydecr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * range[j], x[j] - 0.01 * range[j]);
                self.upp[j] = upp.clamp(x[j] + 0.01 * range[j], x[j] + 10.0 * range[j]);
            }
        }

        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut pm = vec![vec![0.0; n]; m];
        let mut qm = vec![vec![0.0; n]; m];
        let mut b = vec![0.0; m];
        for j in 0..n {
            let (low, upp) = (self.low[j], self.upp[j]);
            alfa[j] = (low + ALBEFA * (x[j] - low))
                .max(x[j] - p.move_limit * range[j])
                .max(self.xmin[j]);
            beta[j] = (upp - ALBEFA * (upp - x[j]))
                .min(x[j] + p.move_limit * range[j])
                .min(self.xmax[j]);
            let xmami = range[j].max(1e-5);
            let ux2 = (upp - x[j]).powi(2);
            let xl2 = (x[j] - low).powi(2);
            let (pp, qq) = (df0dx[j].max(0.0), (-df0dx[j]).max(0.0));
            let pq = 0.001 * (pp + qq) + RAA0 / xmami;
            p0[j] = (pp + pq) * ux2;
            q0[j] = (qq + pq) * xl2;
            for i in 0..m {
                let (pp, qq) = (dfdx[i][j].max(0.0), (-dfdx[i][j]).max(0.0));
                let pq = 0.001 * (pp + qq) + RAA0 / xmami;
                pm[i][j] = (pp + pq) * ux2;
                qm[i][j] = (qq + pq) * xl2;
                b[i] += pm[i][j] / (upp - x[j]) + qm[i][j] / (x[j] - low);
            }
        }
        for i in 0..m {
            b[i] -= fval[i];
        }

        let sub = Subproblem {
            n,
            m,
            low: &self.low,
            upp: &self.upp,
            alfa: &alfa,
            beta: &beta,
            p0: &p0,
            q0: &q0,
            p: &pm,
            q: &qm,
            b: &b,
            c: p.c_penalty,
        };
        let xnew = sub.solve();
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        xnew
    }
}

/// Convex separable subproblem, solved by a primal-dual interior point method
/// with `a0 = 1`, `a_i = 0`, `d_i = 1`.
struct Subproblem<'a> {
    n: usize,
    m: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    b: &'a [f64],
    c: f64,
}

#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Subproblem<'_> {
    fn plam_qlam(&self, pt: &Point, j: usize) -> (f64, f64) {
        let mut pl = self.p0[j];
        let mut ql = self.q0[j];
        for i in 0..self.m {
            pl += self.p[i][j] * pt.lam[i];
            ql += self.q[i][j] * pt.lam[i];
        }
        (pl, ql)
    }

    fn gvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                (0..self.n)
                    .map(|j| self.p[i][j] / (self.upp[j] - x[j]) + self.q[i][j] / (x[j] - self.low[j]))
                    .sum()
            })
            .collect()
    }

    fn residual(&self, pt: &Point, epsi: f64) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut r = Vec::with_capacity(3 * n + 4 * m + 2);
        for j in 0..n {
            let (pl, ql) = self.plam_qlam(pt, j);
            let ux1 = self.upp[j] - pt.x[j];
            let xl1 = pt.x[j] - self.low[j];
            r.push(pl / (ux1 * ux1) - ql / (xl1 * xl1) - pt.xsi[j] + pt.eta[j]);
        }
        for i in 0..m {
            r.push(self.c + pt.y[i] - pt.mu[i] - pt.lam[i]);
        }
        r.push(1.0 - pt.zet);
        let g = self.gvec(&pt.x);
        for i in 0..m {
            r.push(g[i] - pt.y[i] + pt.s[i] - self.b[i]);
        }
        for j in 0..n {
            r.push(pt.xsi[j] * (pt.x[j] - self.alfa[j]) - epsi);
        }
        for j in 0..n {
            r.push(pt.eta[j] * (self.beta[j] - pt.x[j]) - epsi);
        }
        for i in 0..m {
            r.push(pt.mu[i] * pt.y[i] - epsi);
        }
        r.push(pt.zet * pt.z - epsi);
        for i in 0..m {
            r.push(pt.lam[i] * pt.s[i] - epsi);
        }
        r
    }

    fn solve(&self) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let x: Vec<f64> = (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect();
        let mut pt = Point {
            xsi: (0..n).map(|j| (1.0 / (x[j] - self.alfa[j])).max(1.0)).collect(),
            eta: (0..n).map(|j| (1.0 / (self.beta[j] - x[j])).max(1.0)).collect(),
            x,
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            mu: vec![(0.5 * self.c).max(1.0); m],
            zet: 1.0,
            s: vec![1.0; m],
        };
        let mut epsi = 1.0;
        while epsi > EPSIMIN {
            let mut res = self.residual(&pt, epsi);
            let mut resnorm = norm(&res);
            let mut resmax = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut it = 0;
            while resmax > 0.9 * epsi && it < 200 {
                it += 1;
                let d = self.newton_direction(&pt, epsi);
                let mut stm: f64 = 1.0;
                let mut upd = |v: f64, dv: f64| {
                    stm = stm.max(-1.01 * dv / v);
                };
                for i in 0..m {
                    upd(pt.y[i], d.y[i]);
                    upd(pt.lam[i], d.lam[i]);
                    upd(pt.mu[i], d.mu[i]);
                    upd(pt.s[i], d.s[i]);
                }
                upd(pt.z, d.z);
                upd(pt.zet, d.zet);
                for j in 0..n {
                    upd(pt.xsi[j], d.xsi[j]);
                    upd(pt.eta[j], d.eta[j]);
                    upd(pt.x[j] - self.alfa[j], d.x[j]);
                    upd(self.beta[j] - pt.x[j], -d.x[j]);
                }
                let mut steg = 1.0 / stm;
                let old = pt.clone();
                let mut resinew = 2.0 * resnorm;
                let mut itto = 0;
                while resinew > resnorm && itto < 50 {
                    itto += 1;
                    pt = old.clone();
                    pt.axpy(steg, &d);
                    res = self.residual(&pt, epsi);
                    resinew = norm(&res);
                    steg /= 2.0;
                }
                resnorm = resinew;
                resmax = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            }
            epsi *= 0.1;
        }
        pt.x
    }

    fn newton_direction(&self, pt: &Point, epsi: f64) -> Point {
        let (n, m) = (self.n, self.m);
        let mut delx = vec![0.0; n];
        let mut diagx = vec![0.0; n];
        // GG[i][j] = p_ij / ux² - q_ij / xl²
        let mut gg = vec![vec![0.0; n]; m];
        for j in 0..n {
            let (pl, ql) = self.plam_qlam(pt, j);
            let ux1 = self.upp[j] - pt.x[j];
            let xl1 = pt.x[j] - self.low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let dxa = pt.x[j] - self.alfa[j];
            let dbx = self.beta[j] - pt.x[j];
            delx[j] = pl / ux2 - ql / xl2 - epsi / dxa + epsi / dbx;
            diagx[j] = 2.0 * (pl / (ux2 * ux1) + ql / (xl2 * xl1)) + pt.xsi[j] / dxa + pt.eta[j] / dbx;
            for i in 0..m {
                gg[i][j] = self.p[i][j] / ux2 - self.q[i][j] / xl2;
            }
        }
        let g = self.gvec(&pt.x);
        let dely: Vec<f64> = (0..m)
            .map(|i| self.c + pt.y[i] - pt.lam[i] - epsi / pt.y[i])
            .collect();
        let delz = 1.0 - epsi / pt.z;
        let dellam: Vec<f64> = (0..m)
            .map(|i| g[i] - pt.y[i] - self.b[i] + epsi / pt.lam[i])
            .collect();
        let diagy: Vec<f64> = (0..m).map(|i| 1.0 + pt.mu[i] / pt.y[i]).collect();

        // Reduced (m+1)×(m+1) system in (dlam, dz).
        let mut aa = DMatrix::zeros(m + 1, m + 1);
        let mut bb = DVector::zeros(m + 1);
        for i in 0..m {
            bb[i] = dellam[i] + dely[i] / diagy[i]
                - (0..n).map(|j| gg[i][j] * delx[j] / diagx[j]).sum::<f64>();
            for k in 0..m {
                aa[(i, k)] = (0..n).map(|j| gg[i][j] * gg[k][j] / diagx[j]).sum::<f64>();
            }
            aa[(i, i)] += pt.s[i] / pt.lam[i] + 1.0 / diagy[i];
        }
        aa[(m, m)] = -pt.zet / pt.z;
        bb[m] = delz;
        let sol = aa.lu().solve(&bb).unwrap_or_else(|| DVector::zeros(m + 1));
        let dlam: Vec<f64> = (0..m).map(|i| sol[i]).collect();
        let dz = sol[m];

        let dx: Vec<f64> = (0..n)
            .map(|j| {
                let gl: f64 = (0..m).map(|i| gg[i][j] * dlam[i]).sum();
                -delx[j] / diagx[j] - gl / diagx[j]
            })
            .collect();
        let dy: Vec<f64> = (0..m).map(|i| (-dely[i] + dlam[i]) / diagy[i]).collect();
        Point {
            xsi: (0..n)
                .map(|j| {
                    let dxa = pt.x[j] - self.alfa[j];
                    -pt.xsi[j] + epsi / dxa - pt.xsi[j] * dx[j] / dxa
                })
                .collect(),
            eta: (0..n)
                .map(|j| {
                    let dbx = self.beta[j] - pt.x[j];
                    -pt.eta[j] + epsi / dbx + pt.eta[j] * dx[j] / dbx
                })
                .collect(),
            mu: (0..m)
                .map(|i| -pt.mu[i] + epsi / pt.y[i] - pt.mu[i] * dy[i] / pt.y[i])
                .collect(),
            zet: -pt.zet + epsi / pt.z - pt.zet * dz / pt.z,
            s: (0..m)
                .map(|i| -pt.s[i] + epsi / pt.lam[i] - pt.s[i] * dlam[i] / pt.lam[i])
                .collect(),
            x: dx,
            y: dy,
            z: dz,
            lam: dlam,
        }
    }
}

impl Point {
    fn axpy(&mut self, a: f64, d: &Point) {
        let add = |v: &mut [f64], dv: &[f64]| v.iter_mut().zip(dv).for_each(|(v, dv)| *v += a * dv);
        add(&mut self.x, &d.x);
        add(&mut self.y, &d.y);
        add(&mut self.lam, &d.lam);
        add(&mut self.xsi, &d.xsi);
        add(&mut self.eta, &d.eta);
        add(&mut self.mu, &d.mu);
        add(&mut self.s, &d.s);
        self.z += a * d.z;
        self.zet += a * d.zet;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min Σ (x_j - t_j)² s.t. Σ x_j ≤ 1 on [0,1]^n; the optimum projects `t` onto the simplex face.
    #[test]
    fn quadratic_with_linear_constraint() {
        let target = [0.9, 0.6, 0.3, 0.0];
        let n = target.len();
        let mut x = vec![0.25; n];
        let mut mma = Mma::new(MmaParams::default(), &x, vec![0.0; n], vec![1.0; n], 1);
        for _ in 0..60 {
            let df0: Vec<f64> = (0..n).map(|j| 2.0 * (x[j] - target[j])).collect();
            let g = x.iter().sum::<f64>() - 1.0;
            x = mma.update(&x, &df0, &[g], &[vec![1.0; n]]);
        }
        // x_j = max(t_j - s, 0) with Σ x = 1
        let shift = (0.9 + 0.6 + 0.3 - 1.0) / 3.0;
        let expect = [0.9 - shift, 0.6 - shift, 0.3 - shift, 0.0];
        for j in 0..n {
            assert!((x[j] - expect[j]).abs() < 1e-3, "{x:?} vs {expect:?}");
        }
    }

    #[test]
    fn unconstrained_direction_respects_move_limit() {
        let x = vec![0.5; 3];
        let mut mma = Mma::new(MmaParams::default(), &x, vec![0.0; 3], vec![1.0; 3], 1);
        let xn = mma.update(&x, &[-1.0, 1.0, 0.0], &[-1.0], &[vec![0.0; 3]]);
        assert!(xn[0] > 0.5 && xn[0] <= 0.7 + 1e-12);
        assert!(xn[1] < 0.5 && xn[1] >= 0.3 - 1e-12);
        assert!((xn[2] - 0.5).abs() < 1e-3);
    }
}

//! GRU and LSTM cells and the bidirectional encoder built from them.
//!
//! GRU:  z = σ(W_z x + U_z h + b_z), r = σ(W_r x + U_r h + b_r),
//!       n = tanh(W_n x + U_n (r ⊙ h) + b_n), h' = (1 − z) ⊙ n + z ⊙ h
//!
//! LSTM: i, f, o = σ(W x + U h + b), g = tanh(W_g x + U_g h + b_g),
//!       c' = f ⊙ c + i ⊙ g, h' = o ⊙ tanh(c')

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::graph::{Graph, Var};
use crate::numeric::init;
use crate::numeric::params::{ParamId, ParamStore};
use crate::numeric::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[default]
    Gru,
    Lstm,
}

impl CellKind {
    fn gates(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "n"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        }
    }
}

/// Handles to one cell's parameters inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    w: Vec<ParamId>,
    u: Vec<ParamId>,
    b: Vec<ParamId>,
}

/// Recurrent state: `c` is present for LSTM cells only.
#[derive(Debug, Clone, Copy)]
pub struct State {
    pub h: Var,
    pub c: Option<Var>,
}

impl RnnCell {
    /// Register freshly initialized parameters under `prefix`.
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut cell = RnnCell {
            kind,
            input_dim,
            hidden_dim,
            w: Vec::new(),
            u: Vec::new(),
            b: Vec::new(),
        };
        for gate in kind.gates() {
            let w = store.add(format!("{prefix}.W_{gate}"), init::xavier(rng, hidden_dim, input_dim))?;
            let u = store.add(format!("{prefix}.U_{gate}"), init::orthogonal(rng, hidden_dim))?;
            let b = store.add(format!("{prefix}.b_{gate}"), Tensor::zeros(&[hidden_dim]))?;
            cell.w.push(w);
            cell.u.push(u);
            cell.b.push(b);
        }
        Ok(cell)
    }

    /// Re-attach to parameters already present in `store` (e.g. after loading).
    pub fn attach<T: Real>(store: &ParamStore<T>, prefix: &str, kind: CellKind) -> Result<Self> {
        let find = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| Error::ManifestMismatch(format!("missing parameter {name}")))
        };
        let (mut w, mut u, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for gate in kind.gates() {
            w.push(find(format!("{prefix}.W_{gate}"))?);
            u.push(find(format!("{prefix}.U_{gate}"))?);
            b.push(find(format!("{prefix}.b_{gate}"))?);
        }
        let ws = store.get(w[0]).shape();
        let (hidden_dim, input_dim) = (ws[0], ws[1]);
        for ((&wi, &ui), &bi) in w.iter().zip(&u).zip(&b) {
            if store.get(wi).shape() != [hidden_dim, input_dim]
                || store.get(ui).shape() != [hidden_dim, hidden_dim]
                || store.get(bi).shape() != [hidden_dim]
            {
                return Err(Error::ManifestMismatch(format!("inconsistent shapes under {prefix}")));
            }
        }
        Ok(RnnCell {
            kind,
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        })
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.w.iter().chain(&self.u).chain(&self.b).copied()
    }

    pub fn zero_state<T: Real>(&self, g: &mut Graph<'_, T>) -> State {
        let h = g.input(Tensor::zeros(&[self.hidden_dim]));
        let c = match self.kind {
            CellKind::Gru => None,
            CellKind::Lstm => Some(g.input(Tensor::zeros(&[self.hidden_dim]))),
        };
        State { h, c }
    }

    fn pre<T: Real>(&self, g: &mut Graph<'_, T>, gate: usize, x: Var, h: Var) -> Result<Var> {
        let w = g.param(self.w[gate]);
        let u = g.param(self.u[gate]);
        let b = g.param(self.b[gate]);
        g.affine(&[(w, x), (u, h)], Some(b))
    }

    pub fn step<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, state: State) -> Result<State> {
        if g.value(x).len() != self.input_dim {
            return Err(Error::Shape(format!(
                "rnn input of length {} != {}",
                g.value(x).len(),
                self.input_dim
            )));
        }
        match self.kind {
            CellKind::Gru => {
                let h = state.h;
                let z_pre = self.pre(g, 0, x, h)?;
                let z = g.sigmoid(z_pre);
                let r_pre = self.pre(g, 1, x, h)?;
                let r = g.sigmoid(r_pre);
                let rh = g.mul(r, h)?;
                let n_pre = self.pre(g, 2, x, rh)?;
                let n = g.tanh(n_pre);
                let diff = g.sub(h, n)?;
                let zd = g.mul(z, diff)?;
                let h_new = g.add(n, zd)?;
                Ok(State { h: h_new, c: None })
            }
            CellKind::Lstm => {
                let (h, c) = (state.h, state.c.expect("lstm state carries c"));
                let i_pre = self.pre(g, 0, x, h)?;
                let i = g.sigmoid(i_pre);
                let f_pre = self.pre(g, 1, x, h)?;
                let f = g.sigmoid(f_pre);
                let o_pre = self.pre(g, 2, x, h)?;
                let o = g.sigmoid(o_pre);
                let g_pre = self.pre(g, 3, x, h)?;
                let cand = g.tanh(g_pre);
                let fc = g.mul(f, c)?;
                let ic = g.mul(i, cand)?;
                let c_new = g.add(fc, ic)?;
                let tc = g.tanh(c_new);
                let h_new = g.mul(o, tc)?;
                Ok(State {
                    h: h_new,
                    c: Some(c_new),
                })
            }
        }
    }

    /// Run over `rows` in the given order, returning the state after each.
    /// Masked-out positions leave the state unchanged.
    pub fn run<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        rows: &[Var],
        order: impl Iterator<Item = usize>,
        mask: Option<&[bool]>,
    ) -> Result<Vec<Var>> {
        let mut out = vec![None; rows.len()];
        let mut state = self.zero_state(g);
        for t in order {
            if mask.is_none_or(|m| m[t]) {
                state = self.step(g, rows[t], state)?;
            }
            out[t] = Some(state.h);
        }
        Ok(out.into_iter().map(|v| v.expect("every position visited")).collect())
    }
}

/// Output of a bidirectional pass.
#[derive(Debug, Clone)]
pub struct BiRnnOutput {
    /// `[T × 2H]`: forward state after `0..=i`, backward state after `T-1..=i`.
    pub states: Var,
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

impl BiRnnOutput {
    /// Final forward state concatenated with the backward state at position 0.
    pub fn summary<T: Real>(&self, g: &mut Graph<'_, T>) -> Var {
        let last = *self.forward.last().expect("non-empty sequence");
        g.concat(&[last, self.backward[0]])
    }
}

/// Bidirectional encoding of the rows of `inputs` (`[T × in]`).
pub fn birnn<T: Real>(
    g: &mut Graph<'_, T>,
    inputs: Var,
    fwd: &RnnCell,
    bwd: &RnnCell,
    mask: Option<&[bool]>,
) -> Result<BiRnnOutput> {
    let t_len = g.value(inputs).rows();
    if t_len == 0 || g.value(inputs).shape().len() != 2 {
        return Err(Error::Shape(format!(
            "birnn needs a non-empty [T x in] input, got {:?}",
            g.value(inputs).shape()
        )));
    }
    if let Some(m) = mask {
        if m.len() != t_len {
            return Err(Error::Shape(format!("mask length {} != {t_len}", m.len())));
        }
    }
    if fwd.input_dim != bwd.input_dim {
        return Err(Error::Shape("forward and backward cells disagree on input size".into()));
    }
    let rows = (0..t_len).map(|t| g.row(inputs, t)).collect::<Result<Vec<_>>>()?;
    let forward = fwd.run(g, &rows, 0..t_len, mask)?;
    let backward = bwd.run(g, &rows, (0..t_len).rev(), mask)?;
    let cat: Vec<Var> = forward
        .iter()
        .zip(&backward)
        .map(|(&f, &b)| g.concat(&[f, b]))
        .collect();
    let states = g.stack(&cat)?;
    Ok(BiRnnOutput {
        states,
        forward,
        backward,
    })
}

/// Query encoding: final forward state with the backward state at position 0.
pub fn encode_query<T: Real>(g: &mut Graph<'_, T>, inputs: Var, fwd: &RnnCell, bwd: &RnnCell) -> Result<Var> {
    if g.value(inputs).rows() == 0 {
        return Err(Error::Shape("empty query".into()));
    }
    let out = birnn(g, inputs, fwd, bwd, None)?;
    Ok(out.summary(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cells(kind: CellKind, input: usize, hidden: usize, seed: u64) -> (ParamStore<f64>, RnnCell, RnnCell) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = RnnCell::register(&mut store, "f", kind, input, hidden, &mut rng).unwrap();
        let b = RnnCell::register(&mut store, "b", kind, input, hidden, &mut rng).unwrap();
        (store, f, b)
    }

    fn inputs(t: usize, d: usize) -> Tensor<f64> {
        Tensor::matrix(t, d, (0..t * d).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect()).unwrap()
    }

    fn sigma(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn single_step_matches_hand_gru() {
        let (store, f, b) = cells(CellKind::Gru, 3, 2, 1);
        let x = inputs(1, 3);
        let mut g = Graph::new(&store);
        let xv = g.input(x.clone());
        let out = birnn(&mut g, xv, &f, &b, None).unwrap();
        let got = g.value(out.states).row(0).to_vec();

        // Hand evaluation from a zero state: r ⊙ h and z ⊙ h vanish.
        let by = |name: &str| store.by_name(name).unwrap().clone();
        let hand = |p: &str| -> Vec<f64> {
            let (wz, bz, wn, bn) = (
                by(&format!("{p}.W_z")),
                by(&format!("{p}.b_z")),
                by(&format!("{p}.W_n")),
                by(&format!("{p}.b_n")),
            );
            (0..2)
                .map(|j| {
                    let dz: f64 = wz.row(j).iter().zip(x.row(0)).map(|(a, b)| a * b).sum::<f64>() + bz.data()[j];
                    let dn: f64 = wn.row(j).iter().zip(x.row(0)).map(|(a, b)| a * b).sum::<f64>() + bn.data()[j];
                    (1.0 - sigma(dz)) * dn.tanh()
                })
                .collect()
        };
        let want: Vec<f64> = hand("f").into_iter().chain(hand("b")).collect();
        for (a, w) in got.iter().zip(&want) {
            assert!((a - w).abs() < 1e-14, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn zero_weights_closed_form() {
        let (mut store, f, b) = cells(CellKind::Gru, 2, 3, 2);
        let names: Vec<String> = store.iter().map(|(_, n, _)| n.to_string()).collect();
        for n in &names {
            let shape = store.by_name(n).unwrap().shape().to_vec();
            store.set(n, Tensor::zeros(&shape)).unwrap();
        }
        // All zero: z = 0.5, n = tanh(0) = 0, so every state stays 0.
        {
            let mut g = Graph::new(&store);
            let xv = g.input(inputs(4, 2));
            let out = birnn(&mut g, xv, &f, &b, None).unwrap();
            assert!(g.value(out.states).data().iter().all(|&v| v == 0.0));
        }
        // With biases only: h_t = tanh(b_n) (1 − σ(b_z)^t).
        let (bz, bn) = (0.4, -0.8);
        store.set("f.b_z", Tensor::full(&[3], bz)).unwrap();
        store.set("f.b_n", Tensor::full(&[3], bn)).unwrap();
        let mut g = Graph::new(&store);
        let xv = g.input(inputs(4, 2));
        let out = birnn(&mut g, xv, &f, &b, None).unwrap();
        for t in 0..4 {
            let want = f64::tanh(bn) * (1.0 - sigma(bz).powi(t as i32 + 1));
            let row = g.value(out.states).row(t);
            assert!(row[..3].iter().all(|&v| (v - want).abs() < 1e-14));
            assert!(row[3..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn reversing_input_swaps_directions() {
        for kind in [CellKind::Gru, CellKind::Lstm] {
            let (store, f, _) = cells(kind, 3, 2, 5);
            let x = inputs(5, 3);
            let rev = Tensor::from_rows(&(0..5).rev().map(|t| x.row(t).to_vec()).collect::<Vec<_>>(), 3).unwrap();
            let mut g = Graph::new(&store);
            let xv = g.input(x);
            let rv = g.input(rev);
            // Same cell both ways, so the halves must trade places.
            let a = birnn(&mut g, xv, &f, &f, None).unwrap();
            let b = birnn(&mut g, rv, &f, &f, None).unwrap();
            for t in 0..5 {
                let ra = g.value(a.states).row(t).to_vec();
                let rb = g.value(b.states).row(4 - t).to_vec();
                assert_eq!(ra[..2], rb[2..]);
                assert_eq!(ra[2..], rb[..2]);
            }
        }
    }

    #[test]
    fn right_padding_is_inert() {
        for kind in [CellKind::Gru, CellKind::Lstm] {
            let (store, f, b) = cells(kind, 3, 4, 8);
            let x = inputs(4, 3);
            let mut padded_rows: Vec<Vec<f64>> = (0..4).map(|t| x.row(t).to_vec()).collect();
            padded_rows.push(vec![9.0, -9.0, 3.0]);
            padded_rows.push(vec![1.0, 1.0, 1.0]);
            let padded = Tensor::from_rows(&padded_rows, 3).unwrap();
            let mask = [true, true, true, true, false, false];
            let mut g = Graph::new(&store);
            let xv = g.input(x);
            let pv = g.input(padded);
            let plain = birnn(&mut g, xv, &f, &b, None).unwrap();
            let masked = birnn(&mut g, pv, &f, &b, Some(&mask)).unwrap();
            for t in 0..4 {
                assert_eq!(g.value(plain.states).row(t), g.value(masked.states).row(t));
            }
            let s1 = plain.summary(&mut g);
            let last = *masked.forward.last().unwrap();
            let s2 = g.concat(&[last, masked.backward[0]]);
            assert_eq!(g.value(s1), g.value(s2));
        }
    }

    #[test]
    fn query_encoding_of_one_token_is_row_zero() {
        let (store, f, b) = cells(CellKind::Lstm, 3, 2, 4);
        let mut g = Graph::new(&store);
        let xv = g.input(inputs(1, 3));
        let q = encode_query(&mut g, xv, &f, &b).unwrap();
        let all = birnn(&mut g, xv, &f, &b, None).unwrap();
        assert_eq!(g.value(q).data(), g.value(all.states).row(0));
        let empty = g.input(Tensor::zeros(&[0, 3]));
        assert!(encode_query(&mut g, empty, &f, &b).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (store, f, b) = cells(CellKind::Gru, 3, 2, 4);
        let mut g = Graph::new(&store);
        let xv = g.input(inputs(2, 4));
        assert!(matches!(birnn(&mut g, xv, &f, &b, None), Err(Error::Shape(_))));
    }

    #[test]
    fn attach_finds_registered_cells() {
        let (store, f, _) = cells(CellKind::Lstm, 3, 2, 4);
        let again = RnnCell::attach(&store, "f", CellKind::Lstm).unwrap();
        assert_eq!(again, f);
        assert!(RnnCell::attach(&store, "f", CellKind::Gru).is_err());
    }
}

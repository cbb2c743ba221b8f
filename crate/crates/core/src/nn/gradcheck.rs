//! Central-difference gradient estimates, used to check tape gradients.

use super::{ParameterStore, Tensor};

/// Denominator floor for [`relative_error`]. Central differences of an O(1)
/// loss at `h = 1e-5` carry roundoff near `1e-9`, so gradients below the floor
/// are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, 1e-4)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Central-difference estimate `(f(p + h) - f(p - h)) / 2h` for every scalar
/// parameter.
pub fn finite_difference_gradient<F>(loss: F, params: &ParameterStore, h: f64) -> Vec<Tensor>
where
    F: Fn(&ParameterStore) -> f64,
{
    let coords: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|i| (0..params.value(i).numel()).map(move |j| (i, j)))
        .collect();
    let values = finite_difference_at(&loss, params, &coords, h);
    let mut out: Vec<Tensor> = params
        .values()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    for (&(i, j), v) in coords.iter().zip(values) {
        out[i].data_mut()[j] = v;
    }
    out
}

/// Central differences for selected `(tensor index, flat offset)` coordinates.
pub fn finite_difference_at<F>(
    loss: F,
    params: &ParameterStore,
    coords: &[(usize, usize)],
    h: f64,
) -> Vec<f64>
where
    F: Fn(&ParameterStore) -> f64,
{
    let mut work = params.clone();
    coords
        .iter()
        .map(|&(i, j)| {
            let orig = work.value(i).data()[j];
            work.value_mut(i).data_mut()[j] = orig + h;
            let up = loss(&work);
            work.value_mut(i).data_mut()[j] = orig - h;
            let down = loss(&work);
            work.value_mut(i).data_mut()[j] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tape;

    #[test]
    fn quadratic() {
        let mut p = ParameterStore::new();
        p.push("p", Tensor::vector(vec![3.0]));
        let g = finite_difference_gradient(|s| s.value(0).data()[0].powi(2), &p, 1e-5);
        assert!((g[0].data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function() {
        let mut p = ParameterStore::new();
        p.push("w", Tensor::zeros(&[2, 3]));
        let g = finite_difference_gradient(|_| 4.2, &p, 1e-5);
        assert!(g[0].data().iter().all(|&v| v == 0.0));
    }

    /// relu(x W1 + b1) W2 + b2 against a target, checked on the tape.
    #[test]
    fn matches_tape_on_two_layer_net() {
        let mut p = ParameterStore::new();
        p.push(
            "w1",
            Tensor::from_rows(&[[0.3, -0.7, 0.2], [0.9, 0.1, -0.4]]).unwrap(),
        );
        p.push("b1", Tensor::vector(vec![0.05, 0.2, -0.1]));
        p.push("w2", Tensor::from_rows(&[[0.5], [-1.1], [0.8]]).unwrap());
        p.push("b2", Tensor::vector(vec![0.1]));
        let x = Tensor::from_rows(&[[1.0, 2.0], [-0.5, 0.75]]).unwrap();

        let run = |s: &ParameterStore| {
            let mut tape = Tape::new();
            let vars: Vec<_> = s.values().iter().map(|t| tape.param(t.clone())).collect();
            let xv = tape.constant(x.clone());
            let h = tape.linear(xv, vars[0], vars[1]).unwrap();
            let h = tape.relu(h);
            let y = tape.linear(h, vars[2], vars[3]).unwrap();
            let y = tape.weighted_sum_rows(y, vec![1.0, 2.0]).unwrap();
            let l = tape.squared_error(y, 1.5).unwrap();
            (tape, vars, l)
        };
        let (tape, vars, l) = run(&p);
        assert!(tape.kink_margin() > 1e-3);
        let grads = tape.backward(l).unwrap();
        let fd = finite_difference_gradient(
            |s| {
                let (t, _, l) = run(s);
                t.value(l).data()[0]
            },
            &p,
            1e-5,
        );
        for (v, f) in vars.iter().zip(&fd) {
            for (a, b) in grads.get(*v).unwrap().data().iter().zip(f.data()) {
                assert!(relative_error(*a, *b) <= 1e-4, "{a} vs {b}");
            }
        }
    }
}

//! Finite-difference suite over every recorded primitive and the composites
//! built from them.

use std::sync::Arc;

use handrefine::hand_model::HandPair;
use handrefine::interaction::{GcnLayer, SkeletonGraph, TransformerLayer};
use handrefine::numerics::gradcheck::{check_gradients, random_projection, relative_error};
use handrefine::numerics::{Graph, ParamId, ParamStore, Tape, Tensor, Var};
use handrefine::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCES: usize = 20;
pub const TOLERANCE: f64 = 1e-4;
const H: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Values at least `gap` away from zero.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.gen_range(gap..1.5);
        if rng.gen_bool(0.5) { m } else { -m }
    })
}

/// Map coordinates strictly inside `[0, side-1]` and off the integer kinks of
/// the bilinear kernel.
fn cell_coords(rng: &mut ChaCha8Rng, j: usize, side: usize) -> Tensor {
    Tensor::from_fn([j, 2], |_| rng.gen_range(0..side - 1) as f64 + rng.gen_range(0.05..0.95))
}

/// Scalarises `out` with a random projection seeded by `seed`.
fn project_out(t: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    random_projection(t, out, seed)
}

/// Gradient check of a parametrised forward pass with respect to both its
/// inputs and every parameter in `store`.
fn check_module(
    store: &ParamStore,
    inputs: &[Tensor],
    seed: u64,
    f: &dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let eval = |store: &ParamStore, inputs: &[Tensor], trainable: bool| -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut g = Graph::new(store, trainable);
        let vars: Vec<Var> = inputs.iter().map(|x| g.tape.leaf(x.clone(), trainable)).collect();
        let out = f(&mut g, &vars)?;
        let loss = project_out(&mut g.tape, out, seed)?;
        let value = g.tape.value(loss).item();
        if !trainable {
            return Ok((value, vec![], vec![]));
        }
        let grads = g.tape.backward(loss)?;
        let pg = g.param_grads(&grads);
        let ig = vars.iter().map(|v| grads.get_or_zeros(*v)).collect();
        Ok((value, pg, ig))
    };
    let (_, param_grads, input_grads) = eval(store, inputs, true)?;

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut work = store.clone();
    for (pi, pg) in param_grads.iter().enumerate() {
        let id = ParamId::from_index(pi);
        for k in 0..pg.len() {
            let orig = work.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + H;
            let fp = eval(&work, inputs, false)?.0;
            work.get_mut(id).data_mut()[k] = orig - H;
            let fm = eval(&work, inputs, false)?.0;
            work.get_mut(id).data_mut()[k] = orig;
            analytic.push(pg[k]);
            numeric.push((fp - fm) / (2.0 * H));
        }
    }
    let mut xs = inputs.to_vec();
    for (i, ig) in input_grads.iter().enumerate() {
        for k in 0..ig.len() {
            let orig = xs[i].data()[k];
            xs[i].data_mut()[k] = orig + H;
            let fp = eval(store, &xs, false)?.0;
            xs[i].data_mut()[k] = orig - H;
            let fm = eval(store, &xs, false)?.0;
            xs[i].data_mut()[k] = orig;
            analytic.push(ig[k]);
            numeric.push((fp - fm) / (2.0 * H));
        }
    }
    let scale = analytic.iter().chain(&numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n, scale))
        .fold(0.0, f64::max))
}

type Case = Box<dyn Fn(&mut ChaCha8Rng, u64) -> Result<f64>>;

fn tape_case<F>(make: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> + 'static, f: F) -> Case
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Copy + 'static,
{
    Box::new(move |rng, seed| {
        let inputs = make(rng);
        let r = check_gradients(&inputs, H, |t, v| {
            let out = f(t, v)?;
            project_out(t, out, seed)
        })?;
        Ok(r.max_rel_error)
    })
}

fn cases(pair: &HandPair) -> Vec<(&'static str, Case)> {
    let right = Arc::clone(&pair.right);
    let left = Arc::clone(&pair.left);
    let mut v: Vec<(&'static str, Case)> = vec![
        ("add", tape_case(|r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3, 4], -1.0, 1.0)], |t, v| t.add(v[0], v[1]))),
        ("sub", tape_case(|r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3, 4], -1.0, 1.0)], |t, v| t.sub(v[0], v[1]))),
        ("mul", tape_case(|r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3, 4], -1.0, 1.0)], |t, v| t.mul(v[0], v[1]))),
        ("scale", tape_case(|r| vec![uniform(r, &[5], -1.0, 1.0)], |t, v| Ok(t.scale(v[0], -1.7)))),
        ("add_scalar", tape_case(|r| vec![uniform(r, &[5], -1.0, 1.0)], |t, v| {
            let y = t.add_scalar(v[0], 0.3);
            t.mul(y, y)
        })),
        ("relu", tape_case(|r| vec![away_from_zero(r, &[4, 3], 1e-3)], |t, v| Ok(t.relu(v[0])))),
        ("sigmoid", tape_case(|r| vec![uniform(r, &[6], -3.0, 3.0)], |t, v| Ok(t.sigmoid(v[0])))),
        ("exp", tape_case(|r| vec![uniform(r, &[6], -2.0, 2.0)], |t, v| Ok(t.exp(v[0])))),
        ("tanh", tape_case(|r| vec![uniform(r, &[6], -2.0, 2.0)], |t, v| Ok(t.tanh(v[0])))),
        ("sum", tape_case(|r| vec![uniform(r, &[2, 3], -1.0, 1.0)], |t, v| {
            let s = t.sum(v[0]);
            t.mul(s, s)
        })),
        ("mean", tape_case(|r| vec![uniform(r, &[2, 3], -1.0, 1.0)], |t, v| {
            let s = t.mean(v[0]);
            t.mul(s, s)
        })),
        ("dot_const", tape_case(|r| vec![uniform(r, &[7], -1.0, 1.0)], |t, v| {
            let w = Tensor::from_fn([7], |i| (i as f64 - 3.0) * 0.4);
            let s = t.dot_const(v[0], &w)?;
            t.mul(s, s)
        })),
        ("add_n", tape_case(
            |r| (0..3).map(|_| uniform(r, &[2, 2], -1.0, 1.0)).collect(),
            |t, v| {
                let s = t.add_n(v)?;
                t.mul(s, v[0])
            },
        )),
        ("reshape", tape_case(|r| vec![uniform(r, &[2, 6], -1.0, 1.0)], |t, v| {
            let y = t.reshape(v[0], &[3, 4])?;
            t.mul(y, y)
        })),
        ("matmul", tape_case(|r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4, 2], -1.0, 1.0)], |t, v| t.matmul(v[0], v[1]))),
        ("transpose", tape_case(|r| vec![uniform(r, &[3, 4], -1.0, 1.0)], |t, v| {
            let y = t.transpose(v[0])?;
            t.matmul(y, v[0])
        })),
        ("concat", tape_case(|r| vec![uniform(r, &[2, 3], -1.0, 1.0), uniform(r, &[1, 3], -1.0, 1.0)], |t, v| t.concat(&[v[0], v[1], v[0]]))),
        ("concat_cols", tape_case(|r| vec![uniform(r, &[3, 2], -1.0, 1.0), uniform(r, &[3, 1], -1.0, 1.0)], |t, v| t.concat_cols(&[v[1], v[0]]))),
        ("slice_cols", tape_case(|r| vec![uniform(r, &[3, 5], -1.0, 1.0)], |t, v| {
            let y = t.slice_cols(v[0], 1, 4)?;
            t.mul(y, y)
        })),
        ("slice_flat", tape_case(|r| vec![uniform(r, &[12], -1.0, 1.0)], |t, v| {
            let y = t.slice_flat(v[0], 3, &[2, 3])?;
            t.mul(y, y)
        })),
        ("add_row_bias", tape_case(|r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4], -1.0, 1.0)], |t, v| {
            let y = t.add_row_bias(v[0], v[1])?;
            t.mul(y, y)
        })),
        ("add_col_bias", tape_case(|r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3], -1.0, 1.0)], |t, v| {
            let y = t.add_col_bias(v[0], v[1])?;
            t.mul(y, y)
        })),
        ("add_channel_bias", tape_case(|r| vec![uniform(r, &[2, 3, 3], -1.0, 1.0), uniform(r, &[2], -1.0, 1.0)], |t, v| {
            let y = t.add_channel_bias(v[0], v[1])?;
            t.mul(y, y)
        })),
        ("sub_row", tape_case(|r| vec![uniform(r, &[4, 3], -1.0, 1.0)], |t, v| {
            let y = t.sub_row(v[0], 2)?;
            t.mul(y, y)
        })),
        ("add_vec_rows", tape_case(|r| vec![uniform(r, &[4, 3], -1.0, 1.0), uniform(r, &[3], -1.0, 1.0)], |t, v| {
            let y = t.add_vec_rows(v[0], v[1])?;
            t.mul(y, y)
        })),
        ("softmax_rows", tape_case(|r| vec![uniform(r, &[3, 5], -2.0, 2.0)], |t, v| t.softmax_rows(v[0]))),
        ("layer_norm_rows", tape_case(
            |r| vec![uniform(r, &[3, 5], -2.0, 2.0), uniform(r, &[5], 0.5, 1.5), uniform(r, &[5], -0.5, 0.5)],
            |t, v| t.layer_norm_rows(v[0], v[1], v[2], 1e-5),
        )),
        ("mul_spatial", tape_case(|r| vec![uniform(r, &[2, 3, 4], -1.0, 1.0), uniform(r, &[1, 3, 4], -1.0, 1.0)], |t, v| t.mul_spatial(v[0], v[1]))),
        ("global_avg_pool", tape_case(|r| vec![uniform(r, &[3, 4, 4], -1.0, 1.0)], |t, v| {
            let y = t.global_avg_pool(v[0])?;
            t.mul(y, y)
        })),
        ("upsample_nearest", tape_case(|r| vec![uniform(r, &[2, 2, 3], -1.0, 1.0)], |t, v| {
            let y = t.upsample_nearest(v[0], 2)?;
            t.mul(y, y)
        })),
        ("avg_pool", tape_case(|r| vec![uniform(r, &[2, 4, 6], -1.0, 1.0)], |t, v| {
            let y = t.avg_pool(v[0], 2)?;
            t.mul(y, y)
        })),
        ("linear_rows", tape_case(
            |r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[2, 4], -1.0, 1.0), uniform(r, &[2], -1.0, 1.0)],
            |t, v| t.linear_rows(v[0], v[1], v[2]),
        )),
        ("linear_vec", tape_case(
            |r| vec![uniform(r, &[4], -1.0, 1.0), uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3], -1.0, 1.0)],
            |t, v| t.linear_vec(v[0], v[1], v[2]),
        )),
        ("conv2d", tape_case(
            |r| vec![uniform(r, &[2, 5, 5], -1.0, 1.0), uniform(r, &[3, 2, 3, 3], -1.0, 1.0), uniform(r, &[3], -1.0, 1.0)],
            |t, v| t.conv2d(v[0], v[1], Some(v[2]), 1, 1),
        )),
        ("conv2d_strided", tape_case(
            |r| vec![uniform(r, &[2, 6, 6], -1.0, 1.0), uniform(r, &[2, 2, 3, 3], -1.0, 1.0)],
            |t, v| t.conv2d(v[0], v[1], None, 2, 1),
        )),
        ("edge_softmax", tape_case(
            |r| vec![uniform(r, &[SkeletonGraph::hand().edges().len()], -2.0, 2.0)],
            |t, v| t.edge_softmax(v[0], &SkeletonGraph::hand()),
        )),
        ("projection", tape_case(
            |r| vec![uniform(r, &[21, 3], -0.1, 0.1), Tensor::from_vec(vec![r.gen_range(50.0..300.0), r.gen_range(0.0..64.0), r.gen_range(0.0..64.0)])],
            |t, v| t.project(v[0], v[1]),
        )),
        ("joint_feature_sampling", tape_case(
            |r| vec![uniform(r, &[3, 6, 6], -1.0, 1.0), cell_coords(r, 5, 6)],
            |t, v| t.sample_joints(v[0], v[1]),
        )),
        ("multi_plane_projection", tape_case(
            |r| vec![uniform(r, &[4, 3], -1.0, 1.0), cell_coords(r, 4, 5)],
            |t, v| t.splat_planes(v[0], v[1], 5, 5),
        )),
        ("single_plane_projection", tape_case(
            |r| vec![uniform(r, &[4, 3], -1.0, 1.0), cell_coords(r, 4, 5)],
            |t, v| t.splat_sum(v[0], v[1], 5, 5),
        )),
        ("fused_plane_reduction", tape_case(
            |r| vec![uniform(r, &[4, 3], -1.0, 1.0), cell_coords(r, 4, 5), uniform(r, &[2, 12], -1.0, 1.0)],
            |t, v| t.splat_reduce(v[0], v[1], v[2], 5, 5),
        )),
        ("heatmap_projection", tape_case(
            |r| vec![cell_coords(r, 4, 6)],
            |t, v| t.gaussian_heatmaps(v[0], 6, 6, 1.0),
        )),
    ];

    {
        let right = Arc::clone(&right);
        v.push(("lbs", Box::new(move |rng, seed| {
            let inputs = vec![uniform(rng, &[48], -0.5, 0.5), uniform(rng, &[10], -1.0, 1.0)];
            let t = Arc::clone(&right);
            Ok(check_gradients(&inputs, H, |tp, v| {
                let verts = tp.lbs(&t, v[0], v[1])?;
                project_out(tp, verts, seed)
            })?
            .max_rel_error)
        })));
    }
    {
        let left = Arc::clone(&left);
        v.push(("lbs_joints_projection", Box::new(move |rng, seed| {
            let inputs = vec![
                uniform(rng, &[48], -0.5, 0.5),
                uniform(rng, &[10], -1.0, 1.0),
                Tensor::from_vec(vec![rng.gen_range(100.0..300.0), rng.gen_range(10.0..50.0), rng.gen_range(10.0..50.0)]),
            ];
            let t = Arc::clone(&left);
            Ok(check_gradients(&inputs, H, |tp, v| {
                let verts = tp.lbs(&t, v[0], v[1])?;
                let joints = tp.regress_joints(&t, verts)?;
                let uv = tp.project(joints, v[2])?;
                project_out(tp, uv, seed)
            })?
            .max_rel_error)
        })));
    }

    v.push(("gcn_layer", Box::new(|rng, seed| {
        let graph = SkeletonGraph::hand();
        let mut store = ParamStore::new();
        let layer = GcnLayer::new(&mut store, "gcn", 4, &graph, rng);
        for i in 0..store.len() {
            let id = ParamId::from_index(i);
            let n = store.get(id).len();
            store.get_mut(id).data_mut().copy_from_slice(uniform(rng, &[n], -1.0, 1.0).data());
        }
        let x = uniform(rng, &[21, 4], -1.0, 1.0);
        check_module(&store, &[x], seed, &|g, v| layer.forward(g, &graph, v[0]))
    })));
    v.push(("transformer_block", Box::new(|rng, seed| {
        let mut store = ParamStore::new();
        let layer = TransformerLayer::new(&mut store, "tf", 4, 2, 2, rng);
        for i in 0..store.len() {
            let id = ParamId::from_index(i);
            let n = store.get(id).len();
            let noise = uniform(rng, &[n], -0.3, 0.3);
            store.get_mut(id).data_mut().iter_mut().zip(noise.data()).for_each(|(p, e)| *p += e);
        }
        let x = uniform(rng, &[42, 4], -1.0, 1.0);
        check_module(&store, &[x], seed, &|g, v| Ok(layer.forward(g, v[0])?.0))
    })));

    let tri = |rng: &mut ChaCha8Rng| -> (Vec<[f64; 3]>, Arc<Vec<[usize; 3]>>) {
        let v = (0..5).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        (v, Arc::new(vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [1, 3, 2], [4, 1, 0]]))
    };
    let smooth_pair = |rng: &mut ChaCha8Rng, shape: &[usize]| -> Vec<Tensor> {
        let gt = uniform(rng, shape, -1.0, 1.0);
        // Differences kept away from the quadratic/linear switch at β = 1.
        let d = Tensor::from_fn(shape.to_vec(), |_| {
            let m = if rng.gen_bool(0.5) { rng.gen_range(0.01..0.99) } else { rng.gen_range(1.01..2.0) };
            if rng.gen_bool(0.5) { m } else { -m }
        });
        let pred = Tensor::from_fn(shape.to_vec(), |i| gt.data()[i] + d.data()[i]);
        vec![pred, gt]
    };
    v.push(("joint_loss", Box::new(move |rng, _| {
        let x = smooth_pair(rng, &[21, 3]);
        let gt = x[1].clone();
        Ok(check_gradients(&x[..1], H, |t, v| {
            let g = t.constant(gt.clone());
            t.smooth_l1_points(v[0], g, 1.0)
        })?
        .max_rel_error)
    })));
    v.push(("mesh_loss", Box::new(move |rng, _| {
        let x = smooth_pair(rng, &[40, 2]);
        let gt = x[1].clone();
        Ok(check_gradients(&x[..1], H, |t, v| {
            let g = t.constant(gt.clone());
            t.smooth_l1_points(v[0], g, 1.0)
        })?
        .max_rel_error)
    })));
    v.push(("offset_loss", Box::new(move |rng, _| {
        let x = smooth_pair(rng, &[1, 3]);
        let gt = x[1].clone();
        Ok(check_gradients(&x[..1], H, |t, v| {
            let g = t.constant(gt.clone());
            t.smooth_l1_points(v[0], g, 1.0)
        })?
        .max_rel_error)
    })));
    v.push(("normal_loss", Box::new(move |rng, _| {
        let (gt, faces) = tri(rng);
        let pred = uniform(rng, &[5, 3], -1.0, 1.0);
        Ok(check_gradients(&[pred], H, |t, v| Ok(t.normal_consistency(v[0], &gt, &faces)?.0))?.max_rel_error)
    })));
    v.push(("edge_loss", Box::new(move |rng, _| {
        let (gt, faces) = tri(rng);
        let pred = uniform(rng, &[5, 3], -1.0, 1.0);
        Ok(check_gradients(&[pred], H, |t, v| t.edge_length_consistency(v[0], &gt, &faces))?.max_rel_error)
    })));
    v.push(("pixel_loss", Box::new(|rng, _| {
        let gt = uniform(rng, &[3, 4, 4], 0.0, 1.0);
        let pred = uniform(rng, &[3, 4, 4], -1.0, 1.0);
        Ok(check_gradients(&[pred], H, |t, v| {
            let g = t.constant(gt.clone());
            t.mse(v[0], g)
        })?
        .max_rel_error)
    })));
    v
}

/// Runs every case on [`INSTANCES`] random instances.
pub fn run_suite(pair: &HandPair, seed: u64) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::new();
    for (ci, (name, case)) in cases(pair).into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((ci as u64 + 1) << 32));
        let mut worst = 0.0f64;
        for i in 0..INSTANCES {
            let e = case(&mut rng, seed.wrapping_add(i as u64))?;
            worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
        }
        rows.push(SuiteRow {
            name,
            instances: INSTANCES,
            worst,
        });
    }
    Ok(rows)
}

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use subchain_core::certify::{self, CaseParams, SweepMap, PREIMAGE_TOL};
use subchain_core::dense::{dot, norm, DenseMatrix, DenseTensor3};
use subchain_core::fmdata::{build_qualified, check_qualification, Dataset};
use subchain_core::maps::{
    from_point_json, sample_instance, FMPoint, FactorPoint, GmfMap,
    MapInstance, PairVector,
};
use subchain_core::preimage::{
    solve_cp_dagger_at, solve_cp_origin, solve_fm_at, solve_mf_at, solve_mf_origin, DaggerPoint,
    Mode, RADIUS_SLACK,
};
use subchain_core::rng::substream;
use subchain_core::subdiff::{
    fm_train_subdiff, max_inclusion_residual, sample_gradients, support_gap, unit_direction,
    Composite, GmfObjective, LossKind, Objective, ScalarLoss, SeparableLoss, KINK_TOL,
    MEMBERSHIP_TOL_SQ,
};
use subchain_core::{Error, Result};

use crate::{
    CertifyArgs, ChainruleArgs, EvalArgs, JacobianArgs, Outcome, PhaseSweepArgs, PreimageArgs,
    QualifyArgs, SubdiffFmArgs, SubdiffGmfArgs,
};

const GAP_DIRECTIONS: usize = 32;

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::schema(0, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::schema(e.line(), format!("{}: {e}", path.display())))
}

fn read_as<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_value(read_json(path)?)
        .map_err(|e| Error::schema(0, format!("{}: {e}", path.display())))
}

fn get<T: DeserializeOwned>(doc: &Value, key: &str) -> Result<T> {
    let value = doc
        .get(key)
        .ok_or_else(|| Error::schema(0, format!("missing field `{key}`")))?;
    T::deserialize(value).map_err(|e| Error::schema(0, format!("field `{key}`: {e}")))
}

fn check_tolerance(name: &str, value: f64) -> Result<()> {
    if !(value >= 0.0 && value.is_finite()) {
        return Err(Error::Invariant(format!("{name} must be a finite value >= 0, got {value}")));
    }
    Ok(())
}

fn loss(name: &str, param: Option<f64>) -> Result<ScalarLoss> {
    let kind: LossKind = name.parse()?;
    Ok(param.map_or_else(|| kind.with_default(), |p| kind.with_param(p)))
}

fn instance(map: &str, point: Option<&Path>, seed: u64, stream: &str, index: u64) -> Result<MapInstance> {
    match point {
        Some(path) => from_point_json(map, &read_json(path)?),
        None => sample_instance(map, &mut substream(seed, stream, index)),
    }
}

pub fn eval(args: &EvalArgs) -> Result<Outcome> {
    let inst = instance(&args.map, Some(&args.point), 0, "", 0)?;
    let out = inst.map.eval(&inst.point);
    Ok(Outcome {
        result: json!({
            "map": inst.map.name(),
            "input_dim": inst.map.input_dim(),
            "output_dim": inst.map.output_dim(),
            "output": inst.map.output_json(&out),
        }),
        passed: true,
        tolerances: json!({}),
    })
}

pub fn jacobian_check(args: &JacobianArgs, seed: u64) -> Result<Outcome> {
    check_tolerance("tolerance", args.tolerance)?;
    if !(args.step > 0.0) {
        return Err(Error::Invariant("finite-difference step must be positive".into()));
    }
    let fixed = args
        .point
        .as_deref()
        .map(|p| from_point_json(&args.map, &read_json(p)?))
        .transpose()?;
    let mut worst_fd: f64 = 0.0;
    let mut worst_adjoint: f64 = 0.0;
    for k in 0..args.samples as u64 {
        let drawn;
        let inst = match &fixed {
            Some(i) => i,
            None => {
                drawn = sample_instance(&args.map, &mut substream(seed, "jacobian-instance", k))?;
                &drawn
            }
        };
        let (map, x) = (inst.map.as_ref(), &inst.point);
        let rng = &mut substream(seed, "jacobian-direction", k);
        let v = unit_direction(rng, map.input_dim());
        let w = unit_direction(rng, map.output_dim());
        let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&v).map(|(xi, vi)| xi + s * vi).collect() };
        let (plus, minus) = (map.eval(&shifted(args.step)), map.eval(&shifted(-args.step)));
        let jv = map.jvp(x, &v);
        let fd: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * args.step)).collect();
        let diff: Vec<f64> = fd.iter().zip(&jv).map(|(a, b)| a - b).collect();
        worst_fd = worst_fd.max(norm(&diff) / norm(&jv).max(1.0));
        let (lhs, rhs) = (dot(&w, &jv), dot(&map.vjp(x, &w), &v));
        worst_adjoint = worst_adjoint.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    Ok(Outcome {
        result: json!({
            "map": args.map,
            "pairs_checked": args.samples,
            "max_relative_fd_error": worst_fd,
            "max_adjoint_mismatch": worst_adjoint,
        }),
        passed: worst_fd <= args.tolerance && worst_adjoint <= args.tolerance,
        tolerances: json!({"tolerance": args.tolerance, "step": args.step}),
    })
}

pub fn preimage(args: &PreimageArgs) -> Result<Outcome> {
    let mode: Mode = args.mode.parse()?;
    let need_d = || {
        args.d
            .ok_or_else(|| Error::schema(0, "--d is required when no --base is given"))
    };
    let base = args.base.as_deref();
    let result = match args.map.as_str() {
        "mf" => {
            let target: DenseMatrix = read_as(&args.target)?;
            match base {
                Some(b) => {
                    let raw: FactorPoint = read_as(b)?;
                    solve_mf_at(&FactorPoint::new(raw.x, raw.y)?, &target, args.t, mode)?.to_json()
                }
                None => solve_mf_origin(&target, args.t, need_d()?, mode)?.to_json(),
            }
        }
        "fm" => {
            let base: FMPoint = read_as(base.ok_or_else(|| {
                Error::schema(0, "FM preimages need --base with `p` and coefficients `a`")
            })?)?;
            let target: PairVector = read_as(&args.target)?;
            solve_fm_at(&base, target.values(), args.t, mode)?.to_json()
        }
        "cp" => {
            if base.is_some() {
                return Err(Error::schema(0, "CP preimages are solved at the origin only"));
            }
            let target: DenseTensor3 = read_as(&args.target)?;
            solve_cp_origin(&target, args.t, need_d()?, mode)?.to_json()
        }
        "cpdagger" => {
            let raw: DaggerPoint = read_as(base.ok_or_else(|| {
                Error::schema(0, "cpdagger preimages need --base with `x`, `y`, `z`")
            })?)?;
            let base = DaggerPoint::new(raw.x, raw.y, raw.z)?;
            let target: DenseMatrix = read_as(&args.target)?;
            solve_cp_dagger_at(&base, &target, args.t, mode)?.to_json()
        }
        other => {
            return Err(Error::UnknownMap(format!("{other} (preimages exist for mf, fm, cp, cpdagger)")))
        }
    };
    Ok(Outcome {
        result,
        passed: true,
        tolerances: json!({"radius_slack": RADIUS_SLACK, "mode": mode}),
    })
}

pub fn chainrule(args: &ChainruleArgs, seed: u64) -> Result<Outcome> {
    check_tolerance("radius", args.radius)?;
    let inst = instance(&args.map, args.point.as_deref(), seed, "chainrule-instance", 0)?;
    let scalar = loss(&args.loss, args.loss_param)?;
    let outputs = inst.map.output_dim();
    let f = Composite::new(inst.map, Box::new(SeparableLoss::uniform(scalar, outputs)))?;
    let upper = f.upper(&inst.point)?;
    let zero = upper.contains_zero();
    let sample = sample_gradients(&f, &inst.point, args.radius, args.samples, seed)?;
    let inclusion = max_inclusion_residual(&upper, &sample.gradients)?;
    let gap = support_gap(&upper, &sample, GAP_DIRECTIONS, seed)?;
    Ok(Outcome {
        result: json!({
            "map": f.map.name(),
            "loss": scalar,
            "point": f.map.point_json(&inst.point),
            "value": f.value(&inst.point),
            "upper_set": upper,
            "contains_zero": zero,
            "samples": args.samples,
            "sample_radius": args.radius,
            "max_gradient_norm": sample.max_gradient_norm(),
            "rejected_draws": sample.rejected,
            "max_inclusion_residual": inclusion,
            "support_gap": gap,
        }),
        passed: true,
        tolerances: json!({"kink_tol": KINK_TOL, "membership_tol_sq": MEMBERSHIP_TOL_SQ}),
    })
}

pub fn subdiff_fm(args: &SubdiffFmArgs) -> Result<Outcome> {
    let data = Dataset::read(&args.dataset)?;
    let p: DenseMatrix = read_as(&args.params)?;
    let kind: LossKind = args.loss.parse()?;
    let losses: Vec<ScalarLoss> = data
        .samples
        .iter()
        .map(|s| match (kind, args.loss_param) {
            (LossKind::ShiftedRelu, param) => kind.with_param(param.unwrap_or(kind.default_param())),
            _ => kind.with_param(s.y),
        })
        .collect();
    let qualified = build_qualified(&data.samples, data.d0)?;
    let out = fm_train_subdiff(&qualified, &p, &losses)?;
    let zero = out.zonotope.contains_zero();
    Ok(Outcome {
        result: json!({
            "d": p.rows(),
            "d0": data.d0,
            "samples": data.samples.len(),
            "loss": kind,
            "subdifferential": out.zonotope,
            "contains_zero": zero,
            "warnings": out.warnings,
        }),
        passed: true,
        tolerances: json!({"membership_tol_sq": MEMBERSHIP_TOL_SQ}),
    })
}

pub fn subdiff_gmf(args: &SubdiffGmfArgs) -> Result<Outcome> {
    let doc = read_json(&args.params)?;
    let (v, h, p, q): (f64, Vec<f64>, DenseMatrix, DenseMatrix) =
        (get(&doc, "v")?, get(&doc, "h")?, get(&doc, "p")?, get(&doc, "q")?);
    let map = match doc.get("pairs") {
        None => GmfMap::full(h.len(), p.cols(), q.cols()),
        Some(_) => {
            let list: Vec<[usize; 2]> = get(&doc, "pairs")?;
            let pairs = list
                .into_iter()
                .map(|[i, j]| match (i.checked_sub(1), j.checked_sub(1)) {
                    (Some(i), Some(j)) => Ok((i, j)),
                    _ => Err(Error::schema(0, "pair indices are 1-based")),
                })
                .collect::<Result<Vec<_>>>()?;
            GmfMap::new(h.len(), p.cols(), q.cols(), pairs)?
        }
    };
    let kind: LossKind = args.loss.parse()?;
    let losses: Vec<ScalarLoss> = match doc.get("targets") {
        Some(_) => get::<Vec<f64>>(&doc, "targets")?
            .into_iter()
            .map(|y| kind.with_param(y))
            .collect(),
        None => vec![loss(&args.loss, args.loss_param)?; map.pairs().len()],
    };
    let activation = loss(&args.activation, args.activation_param)?;
    let objective = GmfObjective::new(map, activation, losses)?;
    let mut x = vec![v];
    x.extend(&h);
    x.extend(p.vec());
    x.extend(q.vec());
    if x.len() != objective.dim() {
        return Err(Error::Shape(format!("parameters have length {}, expected {}", x.len(), objective.dim())));
    }
    let upper = objective.upper(&x)?;
    let zero = upper.contains_zero();
    Ok(Outcome {
        result: json!({
            "layout": "[v, h, vec P, vec Q]",
            "value": objective.value(&x),
            "activation": activation,
            "subdifferential": upper,
            "contains_zero": zero,
        }),
        passed: true,
        tolerances: json!({"membership_tol_sq": MEMBERSHIP_TOL_SQ}),
    })
}

pub fn qualify(args: &QualifyArgs) -> Result<Outcome> {
    let data = Dataset::read(&args.dataset)?;
    let report = check_qualification(&data.samples, data.d0)?;
    Ok(Outcome {
        passed: report.qualified,
        result: json!({"d0": data.d0, "samples": data.samples.len(), "report": report}),
        tolerances: json!({}),
    })
}

pub fn certify(args: &CertifyArgs, seed: u64) -> Result<Outcome> {
    let params = CaseParams {
        seed,
        trials: args.trials,
        restarts: args.restarts,
        samples: args.samples,
        n: args.n,
        m: args.m,
        d0: args.d0,
        heads: args.heads,
        coefficients: args.coefficients.as_deref().map(read_as).transpose()?,
    };
    let report = certify::run_case(&args.case_id, &params)?;
    Ok(Outcome {
        passed: report.confirmed(),
        result: report.to_json(),
        tolerances: json!({
            "preimage_tol": PREIMAGE_TOL,
            "set_tol": certify::SET_TOL,
            "kink_tol": KINK_TOL,
        }),
    })
}

pub fn phase_sweep(args: &PhaseSweepArgs, seed: u64) -> Result<Outcome> {
    let map = match args.map.parse::<SweepMap>()? {
        SweepMap::Mf { .. } => SweepMap::Mf { m: args.m, n: args.n },
        SweepMap::Fm { .. } => SweepMap::Fm { d0: args.d0 },
    };
    let ds = if args.d.is_empty() {
        let t = map.threshold();
        (t.saturating_sub(1).max(1)..=t).collect()
    } else {
        args.d.clone()
    };
    let table = certify::phase_sweep(map, &ds, args.trials, args.restarts, seed)?;
    let passed = table
        .rows
        .iter()
        .filter(|r| r.d >= table.threshold)
        .all(|r| r.success_rate == 1.0);
    Ok(Outcome {
        passed,
        result: serde_json::to_value(&table).expect("table serializes"),
        tolerances: json!({"preimage_tol": PREIMAGE_TOL}),
    })
}

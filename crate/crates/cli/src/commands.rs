use std::path::Path;

use loadkit::boundary::{check_on_boundary_in, margin_in, ConstraintSet, QBinding};
use loadkit::geometry::{active_circle, intersect, reactive_circle};
use loadkit::oracle::{front_indices, sample_region, singular_locus, Axis, LocusClass, LocusOptions};
use loadkit::pareto::{locate_boundary_point, ray_margin_trace, sweep_front, GrowthDirection, LocateOptions, SweepEntry};
use loadkit::plotdata::{
    circles_table, front_table, locus_table, pareto_table, region_table, thevenin_table, trace_table, Table,
};
use loadkit::powerflow::{jacobian, t_coefficients};
use loadkit::thevenin::{margin_sweep, MarginMetric};
use loadkit::{Error, Network, Result};
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use crate::input::{load_case, parse_grid, parse_weights, LoadedCase};
use crate::report::{state_json, InputDigest};
use crate::{AnalysisArgs, Command, Metric, EXIT_ALARM, EXIT_OK, EXIT_ON_BOUNDARY};

pub struct Globals {
    pub out: Option<String>,
    pub seed: Option<u64>,
}

pub struct Done {
    pub input: InputDigest,
    pub results: Value,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    /// The command's main table, printed with `--format csv`.
    pub table: Table,
    pub exit: u8,
}

pub struct Failure {
    pub error: Error,
    pub input: Option<InputDigest>,
    pub warnings: Vec<String>,
}

struct Ctx {
    case: LoadedCase,
    out: Option<String>,
    files: Vec<String>,
}

impl Ctx {
    fn emit(&mut self, name: &str, table: &Table) -> Result<()> {
        if let Some(prefix) = &self.out {
            let path = format!("{prefix}{name}.csv");
            if let Some(dir) = Path::new(&path).parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            table.save(Path::new(&path))?;
            self.files.push(path);
        }
        Ok(())
    }
}

type Outcome = (Value, Table, u8);

pub fn run(cmd: &Command, g: &Globals) -> std::result::Result<Done, Failure> {
    let path = match cmd {
        Command::Check { case, .. }
        | Command::Margin { case, .. }
        | Command::Pareto { case, .. }
        | Command::Circles { case, .. }
        | Command::Region { case, .. }
        | Command::Thevenin { case, .. } => case,
    };
    let case = load_case(path).map_err(|error| Failure {
        error,
        input: None,
        warnings: Vec::new(),
    })?;
    let input = InputDigest {
        path: path.display().to_string(),
        sha256: case.sha256.clone(),
    };
    let mut ctx = Ctx {
        case,
        out: g.out.clone(),
        files: Vec::new(),
    };
    let outcome = match cmd {
        Command::Check { analysis, epsilon, .. } => check(&mut ctx, analysis, *epsilon),
        Command::Margin { analysis, .. } => margin_cmd(&mut ctx, analysis),
        Command::Pareto { z, sweep, trace, state, .. } => {
            pareto(&mut ctx, z.as_deref(), *sweep, *trace, state.as_deref())
        }
        Command::Circles { bus, samples, state, .. } => circles(&mut ctx, *bus, *samples, state.as_deref()),
        Command::Region { grid, complex, locus_tol, .. } => region(&mut ctx, grid, *complex, *locus_tol, g.seed),
        Command::Thevenin { bus, sweep, z, metric, .. } => thevenin(&mut ctx, *bus, *sweep, z.as_deref(), *metric),
    };
    match outcome {
        Ok((results, table, exit)) => Ok(Done {
            input,
            results,
            files: ctx.files,
            warnings: ctx.case.warnings,
            table,
            exit,
        }),
        Err(error) => Err(Failure {
            error,
            input: Some(input),
            warnings: ctx.case.warnings,
        }),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn direction(net: &Network, z: Option<&str>) -> Result<GrowthDirection> {
    match z {
        Some(s) => GrowthDirection::new(parse_weights(s).map_err(|e| invalid(format!("--z: {e}")))?),
        None => GrowthDirection::new(vec![1.0; net.pq_count()]),
    }
}

fn q_binding_json(net: &Network, qb: &[QBinding]) -> Value {
    qb.iter()
        .map(|b| json!({ "bus": net.bus_id(b.bus), "sense": b.sense }))
        .collect()
}

fn constraints(ctx: &mut Ctx, a: &AnalysisArgs) -> Result<(loadkit::VoltageState, ConstraintSet)> {
    if !(a.tol.is_finite() && a.tol > 0.0) {
        return Err(invalid("--tol must be positive"));
    }
    let v = ctx.case.operating_state(a.state.as_deref())?;
    let q_bindings = ctx.case.q_bindings(&v, a.q_limits, &a.q_limit)?;
    Ok((v, ConstraintSet { q_bindings, ..Default::default() }))
}

fn check(ctx: &mut Ctx, a: &AnalysisArgs, epsilon: Option<f64>) -> Result<Outcome> {
    if epsilon.is_some_and(|e| !(e.is_finite() && e >= 0.0)) {
        return Err(invalid("--epsilon must be finite and non-negative"));
    }
    let (v, cs) = constraints(ctx, a)?;
    let net = &ctx.case.network;
    let verdict = check_on_boundary_in(net, &jacobian(net, &v), &cs, epsilon.unwrap_or(0.0), a.tol)?;
    let exit = match (epsilon, verdict.on_boundary) {
        (_, false) => EXIT_OK,
        (None, true) => EXIT_ON_BOUNDARY,
        (Some(_), true) => EXIT_ALARM,
    };
    let mut table = Table::new(["on_boundary", "alarm", "binding"]);
    let alarm = epsilon.map(|_| verdict.on_boundary);
    table.push(vec![
        (epsilon.is_none() && verdict.on_boundary).to_string(),
        alarm.map_or(String::new(), |x| x.to_string()),
        verdict.binding.join(";"),
    ]);
    let results = json!({
        "mode": if epsilon.is_some() { "alarm" } else { "boundary" },
        "epsilon": epsilon,
        "on_boundary": epsilon.is_none() && verdict.on_boundary,
        "alarm": alarm,
        "q_bindings": q_binding_json(net, &cs.q_bindings),
        "verdict": verdict,
    });
    Ok((results, table, exit))
}

fn margin_cmd(ctx: &mut Ctx, a: &AnalysisArgs) -> Result<Outcome> {
    let (v, cs) = constraints(ctx, a)?;
    let net = &ctx.case.network;
    let j = jacobian(net, &v);
    let result = margin_in(net, &j, &cs)?;
    let unconstrained = if cs.is_empty() {
        result.m
    } else {
        margin_in(net, &j, &ConstraintSet::default())?.m
    };
    let mut table = Table::new(["m", "unconstrained_m", "binding"]);
    table.push(vec![result.m.to_string(), unconstrained.to_string(), result.binding.join(";")]);
    let results = json!({
        "m": result.m,
        "unconstrained_m": unconstrained,
        "q_bindings": q_binding_json(net, &cs.q_bindings),
        "result": result,
    });
    Ok((results, table, EXIT_OK))
}

fn pareto(
    ctx: &mut Ctx,
    z: Option<&str>,
    sweep: Option<usize>,
    trace: Option<usize>,
    state: Option<&Path>,
) -> Result<Outcome> {
    let mut results = serde_json::Map::new();
    let mut primary = None;
    let ids: Vec<usize> = ctx.case.network.pq_buses().map(|d| ctx.case.network.bus_id(d)).collect();

    if let Some(count) = sweep {
        let net = &ctx.case.network;
        if net.pq_count() != 2 {
            return Err(invalid(format!("--sweep needs exactly 2 PQ buses, the case has {}", net.pq_count())));
        }
        if count == 0 {
            return Err(invalid("--sweep needs at least one direction"));
        }
        let entries = sweep_front(net, &GrowthDirection::angular(count), &LocateOptions::default());
        let table = pareto_table(net, &entries);
        let located = entries.iter().filter(|e| e.outcome.is_ok()).count();
        results.insert(
            "sweep".into(),
            json!({
                "directions": count,
                "located": located,
                "rejected": count - located,
                "rows": entries.iter().map(|e| entry_json(&ids, e)).collect::<Vec<_>>(),
            }),
        );
        ctx.emit("pareto_front", &table)?;
        primary = Some(table);
    }

    if z.is_some() || trace.is_some() || sweep.is_none() {
        let zd = direction(&ctx.case.network, z)?;
        let pt = locate_boundary_point(&ctx.case.network, &zd)?;
        let net = &ctx.case.network;
        let entry = SweepEntry { z: zd, outcome: Ok(pt.clone()) };
        let table = pareto_table(net, std::slice::from_ref(&entry));
        let mut point = entry_json(&ids, &entry);
        point["null_dim"] = json!(pt.null_dim);
        point["state"] = state_json(net, &pt.v);
        results.insert("point".into(), point);
        ctx.emit("pareto_point", &table)?;
        primary.get_or_insert(table);

        if let Some(steps) = trace {
            let start = ctx.case.operating_state(state)?;
            let net = &ctx.case.network;
            let points = ray_margin_trace(net, &start, &pt.v, steps)?;
            let margins: Vec<f64> = points.iter().map(|t| t.margin).collect();
            let peak = margins
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |(i, _)| i);
            let table = trace_table(&points);
            results.insert(
                "trace".into(),
                json!({
                    "steps": steps,
                    "peak_index": peak,
                    "non_increasing_after_peak": margins[peak..].windows(2).all(|w| w[1] <= w[0]),
                    "final_margin": margins.last(),
                    "points": points,
                }),
            );
            ctx.emit("margin_trace", &table)?;
            if sweep.is_none() && z.is_none() {
                primary = Some(table);
            }
        }
    }
    Ok((Value::Object(results), primary.expect("some table is always built"), EXIT_OK))
}

fn entry_json(ids: &[usize], e: &SweepEntry) -> Value {
    match &e.outcome {
        Ok(pt) => json!({
            "z": e.z,
            "p": ids.iter().zip(pt.p.iter()).map(|(id, p)| json!({ "bus": id, "p": p })).collect::<Vec<_>>(),
            "residual_norm": pt.residual_norm,
            "on_boundary": pt.on_boundary,
            "status": "ok",
        }),
        Err(err) => json!({
            "z": e.z,
            "p": Value::Null,
            "residual_norm": Value::Null,
            "on_boundary": false,
            "status": err.to_string(),
        }),
    }
}

fn pq_bus(net: &Network, id: usize) -> Result<usize> {
    match net.index_of(id) {
        Some(d) if net.state_position(d).is_some() => Ok(d),
        Some(_) => Err(invalid(format!("bus {id} is the slack bus"))),
        None => Err(invalid(format!("no bus {id} in the case"))),
    }
}

fn circles(ctx: &mut Ctx, bus: Option<usize>, samples: usize, state: Option<&Path>) -> Result<Outcome> {
    if samples == 0 {
        return Err(invalid("--samples must be positive"));
    }
    let v = ctx.case.operating_state(state)?;
    let net = &ctx.case.network;
    let buses: Vec<usize> = match bus {
        Some(id) => vec![pq_bus(net, id)?],
        None => net.pq_buses().collect(),
    };
    let mut all = Vec::new();
    let mut summary = Vec::new();
    for d in buses {
        let id = net.bus_id(d);
        let target = net.target(d);
        let t = t_coefficients(net, &v, d);
        let mut notes = Vec::new();
        let mut keep = |c: Result<loadkit::geometry::CircleDescriptor>| match c {
            Ok(c) => {
                all.push(c);
                Ok(Some(c))
            }
            Err(Error::DegenerateCircle { kind, .. }) => {
                notes.push(format!("{kind} locus is a line"));
                Ok(None)
            }
            Err(e) => Err(e),
        };
        let active = keep(active_circle(id, &t, target.p))?;
        let reactive = keep(reactive_circle(id, &t, target.q))?;
        let intersection = match (&active, &reactive) {
            (Some(a), Some(r)) => match intersect(a, r) {
                Ok(x) => json!({ "gap": x.gap, "points": x.points }),
                Err(e) => json!({ "error": e.to_string() }),
            },
            _ => Value::Null,
        };
        summary.push(json!({
            "bus": id,
            "p": target.p,
            "q": target.q,
            "active": active,
            "reactive": reactive,
            "intersection": intersection,
            "notes": notes,
        }));
    }
    let table = circles_table(&all, samples);
    ctx.emit("circles", &table)?;
    Ok((json!({ "samples": samples, "buses": summary }), table, EXIT_OK))
}

fn region(ctx: &mut Ctx, grid: &str, complex: bool, locus_tol: f64, seed: Option<u64>) -> Result<Outcome> {
    if !(locus_tol.is_finite() && locus_tol > 0.0) {
        return Err(invalid("--locus-tol must be positive"));
    }
    let net = &ctx.case.network;
    let axes = if complex { 2 * net.pq_count() } else { net.pq_count() };
    let mut spec = parse_grid(grid, axes, !complex)?;
    if let Some(seed) = seed {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for a in &mut spec.axes {
            let shift = rng.random::<f64>() * a.step;
            *a = Axis::new(a.lo + shift, a.hi + shift, a.step)?;
        }
    }
    let sample = sample_region(net, &spec)?;
    let rows: Vec<&[f64]> = sample.p_rows().collect();
    let front = front_indices(&rows);
    let locus = singular_locus(net, &sample, &LocusOptions { tol: locus_tol, ..Default::default() });
    let boundary = locus.iter().filter(|p| p.class == LocusClass::Boundary).count();
    let table = region_table(net, &sample);
    let front_t = front_table(net, &sample, &front);
    let locus_t = locus_table(net, &locus);
    let results = json!({
        "grid": spec,
        "seed": seed,
        "points": sample.len(),
        "front_points": front.len(),
        "locus": { "boundary": boundary, "interior": locus.len() - boundary },
    });
    ctx.emit("region", &table)?;
    ctx.emit("front", &front_t)?;
    ctx.emit("locus", &locus_t)?;
    Ok((results, table, EXIT_OK))
}

fn thevenin(ctx: &mut Ctx, bus: Option<usize>, steps: usize, z: Option<&str>, metric: Metric) -> Result<Outcome> {
    let net = &ctx.case.network;
    if net.pq_count() == 0 {
        return Err(invalid("the case has no PQ bus"));
    }
    let d = match bus {
        Some(id) => pq_bus(net, id)?,
        None => 1,
    };
    let metric = match metric {
        Metric::PowerTransfer => MarginMetric::PowerTransfer,
        Metric::ImpedanceRatio => MarginMetric::ImpedanceRatio,
    };
    let zd = direction(net, z)?;
    let rows = margin_sweep(net, d, &zd, steps, metric)?;
    let first_zero = |pick: fn(&loadkit::thevenin::SweepRow) -> f64| {
        rows.iter().find(|r| pick(r) <= 1e-9).map(|r| r.load)
    };
    let results = json!({
        "bus": net.bus_id(d),
        "metric": metric,
        "z": zd,
        "steps": steps,
        "max_load": rows.iter().map(|r| r.load).fold(f64::NEG_INFINITY, f64::max),
        "zero_load": {
            "thevenin": first_zero(|r| r.thevenin_margin),
            "proposed": first_zero(|r| r.proposed_margin),
        },
    });
    let table = thevenin_table(&rows);
    ctx.emit("thevenin", &table)?;
    Ok((results, table, EXIT_OK))
}

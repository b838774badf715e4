//! Stage runners: build the configured objects, call the core analyses and
//! collect tables, plot data and pass/fail checks.

use std::f64::consts::PI;

use anyhow::{anyhow, bail, Context as _, Result};
use singular_flow_core::dimension::{
    estimate_box_dimension, estimate_minkowski_dimension, predicted_print_region, print_scan, PrintConfig, Region,
    Verdict,
};
use singular_flow_core::distance::{DistanceEvaluator, MeasureConfig};
use singular_flow_core::fields::{normal_component, wellposedness_check, FieldSpec, WellposednessConfig};
use singular_flow_core::flow::{
    avoidance_statistics, compressibility_estimate, integral_residual, integrate_flow, lyapunov_trace, AvoidanceReport,
    BoundConfig, CompressibilityReport, FlowConfig, FlowEnsemble, InitialSpec, Status,
};
use singular_flow_core::geometry::{BoxDomain, PointSet};
use singular_flow_core::rng::{key2, keyed, uniform};
use singular_flow_core::sets::{make_product, TimeSet};
use singular_flow_core::transport::{
    empirical_order, gronwall_check, renormalization_residual, solve_transport, Boundary, Interpolation, TestFunction,
    TransportConfig,
};
use singular_flow_core::vortex_wave::{
    default_blob_radius, simulate_vortex_wave, vortex_avoidance_report, ParticleState, VortexWaveConfig, VortexWaveRun,
};

use crate::config::{
    BetaName, BoundaryName, InitialRecipe, InterpolationName, ParticleRecipe, Scenario, Severity, Stage, VerdictName,
};
use crate::exec::Rayon;
use crate::report::{num, Plot, RunReport, StageReport, Table};

// stream keys, one per consumer of randomness
const KEY_DIMENSION: u64 = 1;
const KEY_PRINT: u64 = 2;
const KEY_SECTION: u64 = 3;
const KEY_CONDITIONS: u64 = 4;
const KEY_NORMAL: u64 = 5;
const KEY_FLOW: u64 = 6;
const KEY_BOUND: u64 = 7;
const KEY_VORTEX_BOUND: u64 = 8;

/// Runs `stages` of `sc` in the fixed stage order.
pub fn run_scenario(sc: &Scenario, stages: &[Stage]) -> Result<RunReport> {
    let exec = Rayon::new(sc.threads)?;
    let mut ctx = Ctx {
        sc,
        exec: &exec,
        eval: None,
        ensemble: None,
    };
    let mut order = stages.to_vec();
    order.sort();
    order.dedup();
    let mut out = Vec::with_capacity(order.len());
    for st in order {
        let r = match st {
            Stage::Dimension => ctx.dimension(),
            Stage::Print => ctx.print(),
            Stage::Conditions => ctx.conditions(),
            Stage::Flow => ctx.flow(),
            Stage::Avoidance => ctx.avoidance(),
            Stage::Transport => ctx.transport(),
            Stage::VortexWave => ctx.vortex_wave(),
        }
        .with_context(|| format!("stage {st}"))?;
        out.push(r);
    }
    Ok(RunReport {
        scenario: sc.clone(),
        stages: out,
    })
}

struct Ctx<'a> {
    sc: &'a Scenario,
    exec: &'a Rayon,
    eval: Option<DistanceEvaluator>,
    ensemble: Option<(FlowEnsemble, Option<CompressibilityReport>)>,
}

impl Ctx<'_> {
    fn key(&self, k: u64) -> u64 {
        key2(self.sc.seed, k)
    }

    fn domain(&self) -> Result<BoxDomain> {
        let d = self
            .sc
            .domain
            .as_ref()
            .ok_or_else(|| anyhow!("scenario has no domain"))?;
        Ok(d.build()?)
    }

    fn field(&self) -> Result<FieldSpec> {
        let f = self.sc.field.as_ref().ok_or_else(|| anyhow!("scenario has no field"))?;
        Ok(f.build(self.sc.dim(), self.sc.horizon)?)
    }

    fn evaluator(&mut self) -> Result<&DistanceEvaluator> {
        if self.eval.is_none() {
            let s = self
                .sc
                .singular_set()?
                .ok_or_else(|| anyhow!("scenario has neither a set nor a vortex"))?;
            self.eval = Some(DistanceEvaluator::new(s, self.sc.time_resolution)?);
        }
        Ok(self.eval.as_ref().expect("built above"))
    }

    fn dimension(&mut self) -> Result<StageReport> {
        let spec = self
            .sc
            .dimension
            .as_ref()
            .ok_or_else(|| anyhow!("no [dimension] section"))?;
        let mut rep = StageReport::new(Stage::Dimension);
        let mut table = Table::new(
            "dimension.csv",
            &[
                "set",
                "method",
                "fitted_dim",
                "upper_proxy",
                "lower_proxy",
                "r_squared",
                "slope_stderr",
                "scale_window",
                "low_confidence",
                "expected",
            ],
        );
        for (idx, set) in spec.sets.iter().enumerate() {
            let a = set.recipe.build()?;
            let ladder = set.ladder.as_ref().unwrap_or(&spec.ladder).values()?;
            let mut ests = vec![estimate_box_dimension(&a.points, &ladder)?];
            if spec.minkowski {
                let ml = set
                    .minkowski_ladder
                    .as_ref()
                    .or(set.ladder.as_ref())
                    .unwrap_or(&spec.ladder)
                    .values()?;
                let dom = a
                    .points
                    .bounding_box()
                    .ok_or_else(|| anyhow!("set {} is empty", set.name))?
                    .inflate(2.0 * ml[0]);
                let s = make_product(TimeSet::interval(0.0, 1.0)?, a.clone(), 1.0)?;
                let e = DistanceEvaluator::new(s, 1e-3)?;
                let cfg = MeasureConfig {
                    seed: self.key(KEY_DIMENSION),
                    key: idx as u64,
                    max_samples: spec.max_samples,
                    target_rel_error: spec.target_rel_error,
                    ..MeasureConfig::default()
                };
                ests.push(estimate_minkowski_dimension(self.exec, &e, 0.5, &ml, &dom, &cfg)?);
            }
            for est in &ests {
                let method = match est.method {
                    singular_flow_core::dimension::DimensionMethod::GridCount => "grid",
                    singular_flow_core::dimension::DimensionMethod::Minkowski => "minkowski",
                };
                table.push(vec![
                    set.name.clone(),
                    method.into(),
                    num(est.fitted_dim),
                    num(est.upper_proxy),
                    num(est.lower_proxy),
                    num(est.r_squared),
                    num(est.slope_stderr),
                    format!("{}..{}", num(est.scale_window.0), num(est.scale_window.1)),
                    est.low_confidence.to_string(),
                    set.expect.map_or(String::new(), num),
                ]);
                let (col, file) = match est.method {
                    singular_flow_core::dimension::DimensionMethod::GridCount => ("count", "grid"),
                    singular_flow_core::dimension::DimensionMethod::Minkowski => ("measure", "minkowski"),
                };
                let mut lt = Table::new(format!("dimension_{}_{file}.csv", set.name), &["epsilon", col]);
                for (e, v) in est.scales.iter().zip(&est.values) {
                    lt.push(vec![num(*e), num(*v)]);
                }
                rep.tables.push(lt);
                rep.plots.push(Plot {
                    file: format!("dimension_{}_{file}.dat", set.name),
                    x: "epsilon".into(),
                    y: col.into(),
                    points: est.scales.iter().copied().zip(est.values.iter().copied()).collect(),
                });
            }
            let grid = &ests[0];
            if let Some(x) = set.expect {
                let err = (grid.fitted_dim - x).abs();
                rep.check(
                    format!("{} grid dimension", set.name),
                    err <= set.tolerance,
                    format!("{:.4} vs {x} (|diff| {err:.4} ≤ {})", grid.fitted_dim, set.tolerance),
                );
            }
            if let (Some(tol), Some(mk)) = (spec.agreement, ests.get(1)) {
                let gap = (grid.fitted_dim - mk.fitted_dim).abs();
                rep.check(
                    format!("{} method agreement", set.name),
                    gap <= tol,
                    format!(
                        "grid {:.4}, minkowski {:.4} (gap {gap:.4} ≤ {tol})",
                        grid.fitted_dim, mk.fitted_dim
                    ),
                );
            }
        }
        rep.tables.insert(0, table);
        Ok(rep)
    }

    fn print(&mut self) -> Result<StageReport> {
        let sc = self.sc;
        let spec = sc.print.as_ref().ok_or_else(|| anyhow!("no [print] section"))?;
        let domain = self.domain()?;
        let seed = self.key(KEY_PRINT);
        let section_seed = self.key(KEY_SECTION);
        let exec = self.exec;
        let e = self.evaluator()?;
        let mut cfg = PrintConfig {
            margin: spec.margin,
            time_samples: spec.time_samples,
            ..PrintConfig::default()
        };
        if let Some(l) = &spec.eps_ladder {
            cfg.eps_ladder = l.values()?;
        }
        if let Some(l) = &spec.sigma_ladder {
            cfg.sigma_ladder = l.values()?;
        }
        cfg.measure.seed = seed;
        if let Some(m) = spec.max_samples {
            cfg.measure.max_samples = m;
        }
        let pairs: Vec<(f64, f64)> = spec
            .alphas
            .iter()
            .flat_map(|&a| spec.betas.iter().map(move |&b| (a, b)))
            .collect();
        let verdicts = print_scan(exec, e, &pairs, &domain, spec.eps_floor, &cfg)?;
        let n = e.ambient_dim();
        let mut rep = StageReport::new(Stage::Print);
        let mut table = Table::new(
            "print.csv",
            &[
                "alpha",
                "beta",
                "verdict",
                "predicted",
                "in_band",
                "gamma_min",
                "theta",
                "margin",
                "reason",
            ],
        );
        let mut contradictions = Vec::new();
        let mut decisive = 0;
        for v in &verdicts {
            let (pred, band) = match &spec.predicted {
                Some(d) => {
                    let at = |a: f64, b: f64| predicted_print_region(d.time, d.space, n, a, b);
                    let r = at(v.alpha, v.beta);
                    let lo = at(
                        (v.alpha - spec.band).max(f64::MIN_POSITIVE),
                        (v.beta - spec.band).max(f64::MIN_POSITIVE),
                    );
                    let hi = at(v.alpha + spec.band, v.beta + spec.band);
                    (Some(r), lo != hi || r == Region::Undecided)
                }
                None => (None, false),
            };
            if let Some(r) = pred {
                if !band {
                    let clash = matches!(
                        (r, v.verdict),
                        (Region::Member, Verdict::NonMember) | (Region::NonMember, Verdict::Member)
                    );
                    if clash {
                        contradictions.push(format!("({}, {})", num(v.alpha), num(v.beta)));
                    }
                    if v.verdict != Verdict::Inconclusive {
                        decisive += 1;
                    }
                }
            }
            table.push(vec![
                num(v.alpha),
                num(v.beta),
                verdict_name(v.verdict).into(),
                pred.map_or(String::new(), |r| region_name(r).into()),
                band.to_string(),
                num(v.gamma_min),
                num(v.theta),
                num(v.margin),
                v.reason.clone(),
            ]);
        }
        if let Some(v) = verdicts.first() {
            let mut st = Table::new("print_slices.csv", &["t", "gamma", "stderr", "r_squared"]);
            for s in &v.slices {
                st.push(vec![num(s.t), num(s.gamma), num(s.stderr), num(s.r_squared)]);
            }
            rep.tables.push(st);
            rep.plots.push(Plot {
                file: "print_slices.dat".into(),
                x: "t".into(),
                y: "gamma".into(),
                points: v
                    .slices
                    .iter()
                    .filter(|s| s.gamma.is_finite())
                    .map(|s| (s.t, s.gamma))
                    .collect(),
            });
            rep.note(format!("gamma_min {:.4}, theta {:.4}", v.gamma_min, v.theta));
        }
        if spec.predicted.is_some() {
            rep.check(
                "print agrees with prediction outside the band",
                contradictions.is_empty(),
                if contradictions.is_empty() {
                    format!("{decisive} decisive verdicts outside the band, none contradict")
                } else {
                    format!("contradictions at {}", contradictions.join(" "))
                },
            );
        }
        for x in &spec.expect {
            let got = verdicts
                .iter()
                .find(|v| v.alpha == x.alpha && v.beta == x.beta)
                .map(|v| v.verdict);
            let want = match x.verdict {
                VerdictName::Member => Verdict::Member,
                VerdictName::NonMember => Verdict::NonMember,
                VerdictName::Inconclusive => Verdict::Inconclusive,
            };
            rep.check(
                format!("print ({}, {})", num(x.alpha), num(x.beta)),
                got == Some(want),
                format!(
                    "verdict {} (expected {})",
                    got.map_or("not scanned", verdict_name),
                    verdict_name(want)
                ),
            );
        }
        if let Some(samples) = spec.section_bound_samples {
            let r = e.check_section_bound(samples, section_seed)?;
            rep.check(
                "section bound",
                r.violations == 0 && r.samples == samples,
                format!(
                    "{} violations in {} samples (worst ratio {:.4}, evaluator error {:.2e}, alpha {}, K {})",
                    r.violations, r.samples, r.worst_ratio, r.evaluator_error, r.alpha, r.k
                ),
            );
        }
        rep.tables.insert(0, table);
        Ok(rep)
    }

    fn conditions(&mut self) -> Result<StageReport> {
        let sc = self.sc;
        let spec = sc
            .conditions
            .as_ref()
            .ok_or_else(|| anyhow!("no [conditions] section"))?;
        let domain = self.domain()?;
        let b = self.field()?;
        let seed = self.key(KEY_CONDITIONS);
        let normal_seed = self.key(KEY_NORMAL);
        let exec = self.exec;
        let e = self.evaluator()?;
        let mut cfg = WellposednessConfig::new(domain.clone(), sc.horizon);
        cfg.quadrature.cells_per_axis = spec.cells_per_axis;
        cfg.quadrature.time_samples = spec.time_samples;
        cfg.quadrature.excision = spec.excision;
        cfg.eps_floor = spec.eps_floor;
        cfg.skip_print = spec.skip_print;
        cfg.print.measure.seed = seed;
        let alpha_h = spec.alpha_h.or_else(|| e.target().holder().map(|h| h.0)).unwrap_or(1.0);
        let sup_dim = spec
            .sup_dim
            .or_else(|| sc.section_dim())
            .ok_or_else(|| anyhow!("sup_dim not configured and not known from the set"))?;
        let report = wellposedness_check(exec, &b, e, spec.p, spec.q, alpha_h, sup_dim, &cfg)?;

        let mut rep = StageReport::new(Stage::Conditions);
        let mut table = Table::new(
            "conditions.csv",
            &["condition", "status", "exponent_1", "exponent_2", "evidence"],
        );
        for c in &report.entries {
            table.push(vec![
                c.id.label().into(),
                c.status.label().into(),
                num(c.exponents.0),
                num(c.exponents.1),
                c.evidence.clone(),
            ]);
        }
        rep.tables.push(table);
        rep.note(format!(
            "p {}, q {}, p* {}, q* {}, alpha_h {alpha_h}, sup_dim {sup_dim}, threshold {}",
            num(report.p),
            num(report.q),
            num(report.p_star),
            num(report.q_star),
            report.threshold.map_or("none".into(), num)
        ));
        for c in &report.entries {
            rep.note(format!("({}) {}: {}", c.id.label(), c.status.label(), c.evidence));
        }
        if let Some(x) = spec.expect_threshold {
            rep.check(
                "trajectory threshold",
                report.threshold == Some(x),
                format!(
                    "q̄ = {} (expected {})",
                    report.threshold.map_or("none".into(), num),
                    num(x)
                ),
            );
        }
        for (label, want) in &spec.expect {
            let got = report.entries.iter().find(|c| c.id.label() == label);
            match got {
                Some(c) => rep.check(
                    format!("condition ({label})"),
                    c.status.label() == want,
                    format!("{} (expected {want})", c.status.label()),
                ),
                None => bail!("unknown condition label `{label}` in conditions.expect"),
            }
        }
        if spec.severity == Severity::Error {
            for c in &report.entries {
                if spec.expect.contains_key(c.id.label()) {
                    continue;
                }
                rep.check(
                    format!("condition ({})", c.id.label()),
                    c.status.label() != "violated",
                    c.status.label(),
                );
            }
        }
        if let Some(ns) = &spec.normal {
            let mut rng = keyed(normal_seed, 0);
            let mut t = Table::new("normal.csv", &["t", "x1", "x2", "d_S", "normal", "flagged"]);
            let mut worst: f64 = 0.0;
            let mut got = 0;
            let mut tries = 0usize;
            let mut x = vec![0.0; domain.dim()];
            while got < ns.samples {
                tries += 1;
                if tries > ns.samples.saturating_mul(1000) {
                    bail!(
                        "could not place normal-component samples at distance ≥ {}",
                        ns.min_distance
                    );
                }
                for k in 0..x.len() {
                    x[k] = uniform(&mut rng, domain.lo[k], domain.hi[k]);
                }
                let d = e.dist_spacetime(ns.t, &x)?;
                if d < ns.min_distance {
                    continue;
                }
                let nc = normal_component(&b, e, ns.t, &x, cfg.delta_min)?;
                worst = worst.max(nc.value.abs());
                got += 1;
                let mut row = vec![num(ns.t)];
                row.extend(x.iter().take(2).map(|v| num(*v)));
                row.extend([num(d), num(nc.value), nc.flagged.to_string()]);
                t.push(row);
            }
            rep.tables.push(t);
            rep.check(
                "normal component",
                worst < ns.tolerance,
                format!(
                    "max |b·∇d_S| = {worst:.3e} on {got} points with d_S ≥ {}",
                    ns.min_distance
                ),
            );
        }
        Ok(rep)
    }

    fn flow_config(&self) -> Result<FlowConfig> {
        let spec = self.sc.flow.as_ref().ok_or_else(|| anyhow!("no [flow] section"))?;
        let mut cfg = FlowConfig::new(self.sc.horizon, spec.outputs);
        cfg.delta_min = spec.delta_min;
        if let Some(v) = spec.rtol {
            cfg.control.rtol = v;
        }
        if let Some(v) = spec.atol {
            cfg.control.atol = v;
        }
        if let Some(v) = spec.h_max {
            cfg.control.h_max = v;
        }
        if let Some(v) = spec.c_step {
            cfg.control.c_step = v;
        }
        if spec.escape {
            cfg.escape = Some(self.domain()?);
        }
        if let Some(a) = &self.sc.avoidance {
            cfg.tau_ladder = a.deltas.values()?;
        }
        Ok(cfg)
    }

    fn initial_spec(&self) -> Result<InitialSpec> {
        let spec = self.sc.flow.as_ref().ok_or_else(|| anyhow!("no [flow] section"))?;
        let dom = |d: &Option<crate::config::DomainSpec>| -> Result<BoxDomain> {
            match d {
                Some(d) => Ok(d.build()?),
                None => self.domain(),
            }
        };
        Ok(match &spec.initial {
            InitialRecipe::Grid { per_axis, domain } => InitialSpec::Grid {
                domain: dom(domain)?,
                per_axis: *per_axis,
            },
            InitialRecipe::Random { count, domain } => InitialSpec::Random {
                domain: dom(domain)?,
                count: *count,
                seed: self.key(KEY_FLOW),
            },
            InitialRecipe::Points { points } => {
                let n = self.sc.dim();
                let ps = PointSet::from_rows(n, points)?;
                let w = vec![1.0 / points.len().max(1) as f64; points.len()];
                InitialSpec::Points { points: ps, weights: w }
            }
        })
    }

    /// Integrates the ensemble once; later stages reuse it.
    fn ensure_ensemble(&mut self) -> Result<()> {
        if self.ensemble.is_some() {
            return Ok(());
        }
        let spec = self.sc.flow.as_ref().ok_or_else(|| anyhow!("no [flow] section"))?;
        let b = self.field()?;
        let cfg = self.flow_config()?;
        let init = self.initial_spec()?;
        let exec = self.exec;
        let e = self.evaluator()?;
        let ens = integrate_flow(exec, &b, e, &init, &cfg)?;
        let comp = match &spec.compressibility {
            Some(c) => {
                let boxes = c
                    .boxes
                    .iter()
                    .map(|d| d.build())
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let idx: Vec<usize> = (1..ens.output_times.len()).collect();
                Some(compressibility_estimate(&ens, &boxes, &idx, c.min_count)?)
            }
            None => None,
        };
        self.ensemble = Some((ens, comp));
        Ok(())
    }

    fn flow(&mut self) -> Result<StageReport> {
        self.ensure_ensemble()?;
        let spec = self.sc.flow.as_ref().expect("checked in ensure_ensemble");
        let b = self.field()?;
        let cfg = self.flow_config()?;
        let mut rep = StageReport::new(Stage::Flow);
        let e = self.eval.as_ref().expect("built with the ensemble");
        let (ens, comp) = self.ensemble.as_ref().expect("built above");
        let n = ens.dim;

        let mut counts = std::collections::BTreeMap::<&str, usize>::new();
        for s in &ens.status {
            *counts.entry(s.label()).or_default() += 1;
        }
        let counts_text: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
        rep.note(format!(
            "{} trajectories ({}); {} accepted, {} rejected steps",
            ens.len(),
            counts_text.join(", "),
            ens.accepted_steps,
            ens.rejected_steps
        ));

        if spec.export_trajectories {
            let mut header = vec!["id".to_string(), "t".to_string()];
            header.extend((1..=n).map(|k| format!("x{k}")));
            header.extend(["d_S".to_string(), "status".to_string()]);
            let mut t = Table::with_header("flow.csv", header);
            for i in 0..ens.len() {
                let stop = stop_time(&ens.status[i]);
                for (k, &tk) in ens.output_times.iter().enumerate() {
                    let x = ens.position(i, k);
                    let d = e.dist_spacetime(tk, x).unwrap_or(f64::NAN);
                    let label = match stop {
                        Some(ts) if ts <= tk => ens.status[i].label(),
                        _ => "alive",
                    };
                    let mut row = vec![i.to_string(), num(tk)];
                    row.extend(x.iter().map(|v| num(*v)));
                    row.extend([num(d), label.to_string()]);
                    t.push(row);
                }
            }
            rep.tables.push(t);
        }

        if let Some(c) = comp {
            let mut t = Table::new(
                "flow_compressibility.csv",
                &["box", "t", "count", "ratio", "stderr", "sparse"],
            );
            for r in &c.ratios {
                t.push(vec![
                    r.box_index.to_string(),
                    num(ens.output_times[r.time_index]),
                    r.count.to_string(),
                    num(r.ratio),
                    num(r.stderr),
                    r.sparse.to_string(),
                ]);
            }
            rep.tables.push(t);
            rep.note(format!("compressibility L = {:.5} ± {:.5}", c.l, c.stderr));
            if let Some([lo, hi]) = spec.compressibility.as_ref().and_then(|s| s.expect) {
                let lmin = c
                    .ratios
                    .iter()
                    .filter(|r| !r.sparse)
                    .map(|r| r.ratio)
                    .fold(f64::INFINITY, f64::min);
                rep.check(
                    "compressibility",
                    c.l >= lo && c.l <= hi && lmin >= lo,
                    format!("L = {:.5} (smallest ratio {lmin:.5}) in [{lo}, {hi}]", c.l),
                );
            }
        }

        let alive: Vec<usize> = (0..ens.len()).filter(|&i| ens.status[i] == Status::Alive).collect();
        let pick = |k: usize| -> Vec<usize> {
            if alive.is_empty() || k == 0 {
                return Vec::new();
            }
            let k = k.min(alive.len());
            (0..k).map(|j| alive[j * alive.len() / k]).collect()
        };
        if spec.residual_samples > 0 {
            let mut t = Table::new("flow_residual.csv", &["id", "residual"]);
            let mut worst: f64 = 0.0;
            for i in pick(spec.residual_samples) {
                let r = integral_residual(&b, e, ens.initial.point(i), &cfg)?;
                worst = worst.max(r);
                t.push(vec![i.to_string(), num(r)]);
            }
            rep.tables.push(t);
            rep.check(
                "integral form residual",
                worst <= spec.residual_tolerance,
                format!("max residual {worst:.3e} ≤ {:.1e}", spec.residual_tolerance),
            );
        }
        if spec.lyapunov_samples > 0 {
            let mut t = Table::new(
                "flow_lyapunov.csv",
                &["id", "t", "d_S", "g", "quotient", "bound", "ok", "flagged"],
            );
            let mut bad = 0;
            for i in pick(spec.lyapunov_samples) {
                let tr = lyapunov_trace(&b, e, ens.initial.point(i), &cfg, spec.lyapunov_r0, 1e-6)?;
                bad += tr.unflagged_violations;
                for r in &tr.rows {
                    t.push(vec![
                        i.to_string(),
                        num(r.t),
                        num(r.d),
                        num(r.g),
                        num(r.quotient),
                        num(r.bound),
                        r.ok.to_string(),
                        r.flagged.to_string(),
                    ]);
                }
            }
            rep.tables.push(t);
            rep.check(
                "distance growth bound",
                bad == 0,
                format!("{bad} unflagged steps exceed 1 + |b·∇d_S|"),
            );
        }
        Ok(rep)
    }

    fn avoidance(&mut self) -> Result<StageReport> {
        self.ensure_ensemble()?;
        let spec = self
            .sc
            .avoidance
            .as_ref()
            .ok_or_else(|| anyhow!("no [avoidance] section"))?;
        let b = self.field()?;
        let deltas = spec.deltas.values()?;
        let (ens, comp) = self.ensemble.as_ref().expect("built above");
        let l = spec.compressibility.or(comp.as_ref().map(|c| c.l)).unwrap_or(1.0);
        let cfg = BoundConfig {
            samples: spec.bound_samples,
            seed: self.key(KEY_BOUND),
            ..BoundConfig::default()
        };
        let e = self.eval.as_ref().expect("built with the ensemble");
        let mut r = avoidance_statistics(self.exec, ens, &b, e, spec.r0, &deltas, l, &cfg)?;
        retolerate(&mut r, spec.tolerance);
        let mut rep = StageReport::new(Stage::Avoidance);
        avoidance_tables(&mut rep, &r, "avoidance");
        Ok(rep)
    }

    fn transport(&mut self) -> Result<StageReport> {
        let sc = self.sc;
        let spec = sc.transport.as_ref().ok_or_else(|| anyhow!("no [transport] section"))?;
        let domain = self.domain()?;
        let b = self.field()?;
        let div_free = sc.field.as_ref().is_some_and(|f| f.divergence_free());
        let has_set = sc.set.is_some() || sc.field.as_ref().is_some_and(|f| !f.vortices.is_empty());
        let exec = self.exec;
        let e = if has_set { Some(self.evaluator()?) } else { None };
        let horizon = spec.horizon.unwrap_or(sc.horizon);
        let phis = spec
            .test_functions
            .iter()
            .map(|p| TestFunction::new(p.center.to_vec(), p.radii.to_vec()))
            .collect::<singular_flow_core::Result<Vec<_>>>()?;
        let mut rep = StageReport::new(Stage::Transport);
        let mut res_table = Table::new("transport_residual.csv", &["beta", "phi_id", "h", "residual"]);
        // residuals[beta][phi] over grids
        let mut residuals = vec![vec![Vec::new(); phis.len()]; spec.betas.len()];
        let mut hs = Vec::new();
        let mut last = None;
        for &cells in &spec.cells {
            let h = (domain.hi[0] - domain.lo[0]) / cells as f64;
            let mut cfg = TransportConfig::new(domain.clone(), cells, spec.dt_factor * h, horizon);
            cfg.stride = spec.stride;
            cfg.boundary = match spec.boundary {
                BoundaryName::Periodic => Boundary::Periodic,
                BoundaryName::Clamp => Boundary::Clamp,
            };
            cfg.interpolation = match spec.interpolation {
                InterpolationName::Bilinear => Interpolation::Bilinear,
                InterpolationName::MonotoneCubic => Interpolation::MonotoneCubic,
            };
            let init = spec.initial.clone();
            let u = solve_transport(exec, &b, e, move |x: &[f64]| init.eval(x), &cfg)?;
            hs.push(h);
            for (bi, beta) in spec.betas.iter().enumerate() {
                for (pi, phi) in phis.iter().enumerate() {
                    let r = match renormalization_residual(&u, &b, |z| beta.eval(z), phi) {
                        Ok(r) => r,
                        Err(singular_flow_core::Error::ContaminatedSupport { .. }) => {
                            rep.note(format!("test function {pi} meets contaminated nodes at h = {h}"));
                            f64::NAN
                        }
                        Err(err) => return Err(err.into()),
                    };
                    residuals[bi][pi].push(r);
                    res_table.push(vec![beta.name().into(), pi.to_string(), num(h), num(r)]);
                }
            }
            if !u.contaminated_nodes().is_empty() {
                rep.note(format!(
                    "{} contaminated nodes at h = {h}",
                    u.contaminated_nodes().len()
                ));
            }
            last = Some(u);
        }
        let u = last.ok_or_else(|| anyhow!("transport needs at least one grid"))?;
        rep.tables.push(res_table);
        for (bi, beta) in spec.betas.iter().enumerate() {
            for (pi, rs) in residuals[bi].iter().enumerate() {
                rep.plots.push(Plot {
                    file: format!("transport_residual_{}_{pi}.dat", beta.name()),
                    x: "h".into(),
                    y: "residual".into(),
                    points: hs.iter().copied().zip(rs.iter().copied()).collect(),
                });
                if let (Some(p), BetaName::Square) = (spec.min_order, beta) {
                    let decreasing = rs.windows(2).all(|w| w[1] < w[0]);
                    let order = empirical_order(&hs, rs).unwrap_or(f64::NAN);
                    rep.check(
                        format!("renormalization order (square, phi {pi})"),
                        decreasing && order >= p,
                        format!(
                            "residuals {} ; order {order:.3} ≥ {p}",
                            rs.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(" ")
                        ),
                    );
                }
            }
        }
        let g = gronwall_check(&u, &b)?;
        let mut et = Table::new(
            "transport_energy.csv",
            &["t", "energy", "div_sup", "rhs", "rate", "margin"],
        );
        for r in &g.rows {
            et.push(vec![
                num(r.t),
                num(r.energy),
                num(r.div_sup),
                num(r.rhs),
                num(r.rate),
                num(r.margin),
            ]);
        }
        rep.tables.push(et);
        rep.plots.push(Plot {
            file: "transport_energy.dat".into(),
            x: "t".into(),
            y: "energy".into(),
            points: g.rows.iter().map(|r| (r.t, r.energy)).collect(),
        });
        rep.check(
            "gronwall",
            g.max_margin <= spec.gronwall_tolerance,
            format!(
                "worst interval margin {:.3e}, integrated {:.3e} ≤ {}",
                g.max_margin, g.integral_margin, spec.gronwall_tolerance
            ),
        );
        if let Some(tol) = spec.energy_tolerance {
            let e0 = g.rows[0].energy;
            let drift = g.rows.iter().map(|r| (r.energy / e0 - 1.0).abs()).fold(0.0, f64::max);
            if div_free {
                rep.check(
                    "energy conservation",
                    drift <= tol,
                    format!("max relative drift of ∫u² {drift:.3e} ≤ {tol}"),
                );
            } else {
                rep.note(format!("∫u² drift {drift:.3e}; field not divergence-free, not checked"));
            }
        }
        if spec.snapshot {
            let mut st = Table::new("transport_field.csv", &["t", "x1", "x2", "u"]);
            let last = u.values.len() - 1;
            for k in [0, last] {
                for (i, v) in u.values[k].iter().enumerate() {
                    let x = u.node(i);
                    st.push(vec![num(u.times[k]), num(x[0]), num(x[1]), num(*v)]);
                }
            }
            rep.tables.push(st);
        }
        Ok(rep)
    }

    fn vortex_wave(&mut self) -> Result<StageReport> {
        let sc = self.sc;
        let spec = sc
            .vortex_wave
            .as_ref()
            .ok_or_else(|| anyhow!("no [vortex_wave] section"))?;
        let initial = match &spec.particles {
            ParticleRecipe::Density { profile, cells, domain } => {
                let dom = match domain {
                    Some(d) => d.build()?,
                    None => self.domain()?,
                };
                ParticleState::from_density(|x| profile.eval(x), &dom, *cells, spec.z0)?
            }
            ParticleRecipe::List { positions, omega } => {
                ParticleState::from_particles(positions.clone(), omega.clone(), spec.z0)?
            }
        };
        let rho = match spec.blob_radius {
            Some(r) => r,
            None => {
                let r = default_blob_radius(&initial.positions);
                if r > 0.0 {
                    r
                } else {
                    bail!("blob_radius must be configured for a single particle");
                }
            }
        };
        let horizon = spec.horizon.unwrap_or(sc.horizon);
        let mut cfg = VortexWaveConfig::new(spec.gamma, rho, horizon);
        cfg.normalized = spec.normalized;
        cfg.snapshots = spec.snapshots;
        if let Some(v) = spec.rtol {
            cfg.control.rtol = v;
        }
        if let Some(v) = spec.atol {
            cfg.control.atol = v;
        }
        let run = simulate_vortex_wave(self.exec, &initial, &cfg)?;
        let mut rep = StageReport::new(Stage::VortexWave);
        rep.note(format!(
            "{} particles, blob radius {rho}, {} accepted steps, {} core warnings",
            initial.len(),
            run.accepted_steps,
            run.core_warnings
        ));

        let mut st = Table::new("vortex_wave_snapshots.csv", &["t", "id", "x1", "x2", "omega"]);
        for s in &run.snapshots {
            for (i, (p, w)) in s.positions.iter().zip(&s.omega).enumerate() {
                st.push(vec![num(s.t), i.to_string(), num(p[0]), num(p[1]), num(*w)]);
            }
        }
        rep.tables.push(st);
        let mut vt = Table::new("vortex_wave_vortex.csv", &["t", "z1", "z2"]);
        for (t, z) in &run.vortex {
            vt.push(vec![num(*t), num(z[0]), num(z[1])]);
        }
        rep.tables.push(vt);
        rep.plots.push(Plot {
            file: "vortex_wave_vortex.dat".into(),
            x: "z1".into(),
            y: "z2".into(),
            points: run.vortex.iter().map(|(_, z)| (z[0], z[1])).collect(),
        });

        let w0 = initial.total_vorticity();
        let exact = run.snapshots.iter().all(|s| s.total_vorticity() == w0);
        rep.check("total vorticity", exact, format!("Σω = {} at every snapshot", num(w0)));
        let m0 = initial.circulation_moment(spec.gamma);
        let moment_drift = run
            .snapshots
            .iter()
            .map(|s| {
                let m = s.circulation_moment(spec.gamma);
                (m[0] - m0[0]).hypot(m[1] - m0[1])
            })
            .fold(0.0, f64::max);
        rep.note(format!("centre of circulation moved by {moment_drift:.3e}"));

        if let Some(tol) = spec.period_tolerance {
            if initial.len() != 1 {
                bail!("period_tolerance needs exactly one particle");
            }
            let g1 = initial.omega[0];
            let p0 = initial.positions[0];
            let d = (p0[0] - spec.z0[0]).hypot(p0[1] - spec.z0[1]);
            let scale = if spec.normalized { 2.0 * PI } else { 1.0 };
            let expected = 2.0 * PI * scale * d * d / (g1 + spec.gamma);
            let measured = orbital_period(&run);
            let err = measured.map_or(f64::INFINITY, |m| (m / expected - 1.0).abs());
            rep.check(
                "two-vortex period",
                err <= tol,
                format!(
                    "measured {} vs closed form {} (relative error {err:.3e} ≤ {tol})",
                    measured.map_or("no full turn".into(), num),
                    num(expected)
                ),
            );
        }
        if let Some(m) = spec.max_drift {
            let drift = run.vortex_drift();
            rep.check(
                "vortex drift",
                drift <= m,
                format!("largest displacement {drift:.3e} ≤ {m:.3e}"),
            );
        }
        if let Some(a) = &spec.avoidance {
            let bc = BoundConfig {
                samples: a.bound_samples,
                seed: self.key(KEY_VORTEX_BOUND),
                ..BoundConfig::default()
            };
            let r = vortex_avoidance_report(self.exec, &run, &a.deltas.values()?, a.r0, &bc)?;
            avoidance_tables(&mut rep, &r, "vortex_wave_avoidance");
        }
        Ok(rep)
    }
}

fn retolerate(r: &mut AvoidanceReport, tol: f64) {
    r.tolerance = tol;
    r.holds = r.product.iter().map(|p| *p <= r.bound * (1.0 + tol)).collect();
}

fn avoidance_tables(rep: &mut StageReport, r: &AvoidanceReport, stem: &str) {
    let mut t = Table::new(format!("{stem}.csv"), &["delta", "mu_F", "stderr", "product", "bound"]);
    for i in 0..r.deltas.len() {
        t.push(vec![
            num(r.deltas[i]),
            num(r.mu[i]),
            num(r.stderr[i]),
            num(r.product[i]),
            num(r.bound),
        ]);
    }
    rep.tables.push(t);
    rep.plots.push(Plot {
        file: format!("{stem}.dat"),
        x: "delta".into(),
        y: "mu_F".into(),
        points: r.deltas.iter().copied().zip(r.mu.iter().copied()).collect(),
    });
    rep.note(format!(
        "B = {:.5} ± {:.5} (L = {}); eligible weight {:.5} over {} trajectories, {} flagged",
        r.bound, r.bound_stderr, r.compressibility, r.eligible_weight, r.eligible_count, r.flagged
    ));
    rep.check("avoidance nesting", r.nested, "F(δ) grows with δ");
    for i in 0..r.deltas.len() {
        rep.check(
            format!("avoidance bound at δ = {}", num(r.deltas[i])),
            r.holds[i],
            format!(
                "μ·log(r0/δ) = {:.5} ≤ {:.5}",
                r.product[i],
                r.bound * (1.0 + r.tolerance)
            ),
        );
    }
}

fn stop_time(s: &Status) -> Option<f64> {
    match s {
        Status::Alive => None,
        Status::Absorbed { t, .. } | Status::Escaped { t } => Some(*t),
    }
}

/// Time of the first full turn of particle 0 about the vortex, by linear
/// interpolation of the unwrapped relative angle between snapshots.
pub fn orbital_period(run: &VortexWaveRun) -> Option<f64> {
    let angle = |s: &ParticleState| {
        let p = s.positions[0];
        (p[1] - s.z[1]).atan2(p[0] - s.z[0])
    };
    let first = run.snapshots.first()?;
    let a0 = angle(first);
    let mut prev = (first.t, 0.0f64);
    let mut last_raw = a0;
    let mut acc = 0.0f64;
    for s in &run.snapshots[1..] {
        let a = angle(s);
        let mut da = a - last_raw;
        while da > PI {
            da -= 2.0 * PI;
        }
        while da < -PI {
            da += 2.0 * PI;
        }
        acc += da;
        last_raw = a;
        if acc.abs() >= 2.0 * PI {
            let f = (2.0 * PI - prev.1.abs()) / (acc.abs() - prev.1.abs());
            return Some(prev.0 + f * (s.t - prev.0));
        }
        prev = (s.t, acc);
    }
    None
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Member => "member",
        Verdict::NonMember => "non-member",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Member => "member",
        Region::NonMember => "non-member",
        Region::Undecided => "undecided",
    }
}

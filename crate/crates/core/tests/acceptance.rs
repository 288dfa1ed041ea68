//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line.
//! Run with `cargo test -p kicnet --test acceptance -- --nocapture`.

use kicnet::analytic::ideal::{limits, r_e2ekic, r_fd, r_pnc, r_pr, to_f64, Rational};
use kicnet::analytic::saturation::{solve_fixed_point, SaturationParams};
use kicnet::experiment::{run_plan, write_results, ExperimentPlan, RunResult, Sweep};
use kicnet::frames::{nav_cts, nav_data, nav_rts, TimingConfig};
use kicnet::mac::e2ekic::{ack_delay, beta, stage2_entry_delay, EntryGroup};
use kicnet::mac::{BackoffPolicy, MacKind};
use kicnet::metrics::{e2e_delay, node_throughput};
use kicnet::phy::ChannelConfig;
use kicnet::scenario::{Arrival, Config, GridFlows, TopologyConfig};
use kicnet::sim::{check_invariants, simulate, InvariantReport, RunOptions, TraceMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDEAL_TOL: f64 = 1e-4;
const CYCLE_TOL_US: u64 = 1;
const MIN_EXCHANGES: usize = 1000;
const CHAIN_GAIN: (f64, f64) = (2.1, 3.9);
const CHAIN_DELAY_RATES: [f64; 7] = [40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
const GRID_REL_TOL: f64 = 0.30;
const RANDOM_GAIN: (f64, f64) = (1.1, 2.2);
const RANDOM_RATES: [f64; 10] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];
const RANDOM_DELAY_FROM: f64 = 45.0;
const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n}: {detail}");
}

fn chain(n: usize) -> Config {
    let mut c = Config::default();
    c.topology = TopologyConfig::Chain {
        n_nodes: n,
        spacing: 200.0,
    };
    c
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn select(results: &[RunResult], mac: MacKind, rate: Option<f64>) -> Vec<&RunResult> {
    results.iter().filter(|r| r.mac == mac && rate.is_none_or(|x| r.packet_rate == x)).collect()
}

fn mean_throughput(rs: &[&RunResult]) -> f64 {
    mean(rs.iter().map(|r| r.stats.throughput_bps().unwrap()))
}

/// Mean of per-run mean delays.
fn mean_delay(rs: &[&RunResult]) -> f64 {
    mean(rs.iter().filter_map(|r| e2e_delay(&r.stats).ok()).map(|d| d.mean_us))
}

#[test]
fn criterion_1_ideal_limits() {
    let m = 1_000_000;
    let got = [r_e2ekic(7, m), r_fd(7, m), r_pnc(7, m), r_pr(7, m)].map(|r| to_f64(r.unwrap()));
    let want = [1.0, 0.5, 0.5, 1.0 / 3.0];
    let near = got.iter().zip(want).all(|(g, w)| (g - w).abs() < IDEAL_TOL);
    let exact = limits() == [Rational::new(1, 1), Rational::new(1, 2), Rational::new(1, 2), Rational::new(1, 3)];
    report(1, near && exact, format!("N=7, M=1e6: {got:?}; exact limits {}", if exact { "match" } else { "differ" }));
}

#[test]
fn criterion_2_formula_golden_values() {
    let t = TimingConfig {
        cts: 300,
        ack: 300,
        phy_header: 190,
        mac_header: 250,
        ..TimingConfig::default()
    };
    assert_eq!(t.t_data(), 8000);
    let checks: Vec<(&str, u64, u64)> = vec![
        ("beta(1)", beta(1) as u64, 1),
        ("beta(3)", beta(3) as u64, 0),
        ("beta(6)", beta(6) as u64, 1),
        ("entry core", stage2_entry_delay(EntryGroup::Core, 2, 2, 0, &t).unwrap(), 930),
        ("entry posterior", stage2_entry_delay(EntryGroup::Posterior, 2, 2, 1, &t).unwrap(), 620),
        ("entry anterior", stage2_entry_delay(EntryGroup::Anterior, 2, 2, 1, &t).unwrap(), 310),
        ("ack(2)", ack_delay(2, &t).unwrap(), 10),
        ("ack(4)", ack_delay(4, &t).unwrap(), 320),
        ("ack(5)", ack_delay(5, &t).unwrap(), 320),
        ("nav_rts(0,1)", nav_rts(0, 1, &t).unwrap(), 9210),
        ("nav_rts(2,2)", nav_rts(2, 2, &t).unwrap(), 9830),
        ("nav_rts(5,5)", nav_rts(5, 5, &t).unwrap(), 10760),
        ("nav_cts(i+1)", nav_cts(4, 3, 9830, &t).unwrap(), 9520),
        ("nav_cts(i-1)", nav_cts(2, 3, 9830, &t).unwrap(), 9210),
        ("nav_cts(i+2)", nav_cts(5, 3, 9520, &t).unwrap(), 9210),
        ("nav_data(1)", nav_data(1, 1, &t).unwrap(), 760),
        ("nav_data(2)", nav_data(2, 1, &t).unwrap(), 760),
        ("nav_data(3)", nav_data(3, 0, &t).unwrap(), 620),
    ];
    let bad: Vec<String> = checks.iter().filter(|c| c.1 != c.2).map(|c| format!("{} = {} != {}", c.0, c.1, c.2)).collect();
    let errors_rejected = nav_rts(1, 0, &t).is_err() && nav_cts(3, 3, 9830, &t).is_err() && ack_delay(1, &t).is_err();
    report(
        2,
        bad.is_empty() && errors_rejected,
        format!("{} golden values, mismatches {bad:?}, invalid inputs rejected: {errors_rejected}", checks.len()),
    );
}

#[test]
fn criterion_3_protocol_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total = InvariantReport::default();
    let mut runs = 0;
    while total.exchanges < 2 * MIN_EXCHANGES || runs < 12 {
        let mut cfg = if runs % 3 == 2 {
            let mut c = Config::default();
            c.topology = TopologyConfig::Grid {
                rows: 8,
                cols: 8,
                d: if rng.random_bool(0.5) { 110.0 } else { 150.0 },
                r: 200.0,
                n_path: 7,
                initiator: rng.random_range(1..4),
                flows: GridFlows::Clip,
            };
            c.traffic.saturate_relays = true;
            c.traffic.arrival = Arrival::Saturated;
            c.mac.e2ekic.backoff = BackoffPolicy::Fixed {
                w: rng.random_range(50..800),
            };
            c.mac.e2ekic.contention_reduction = false;
            c
        } else {
            let mut c = chain(rng.random_range(3..11));
            c.traffic.arrival = if rng.random_bool(0.3) { Arrival::Saturated } else { Arrival::Poisson };
            c.traffic.packet_rate = rng.random_range(10.0..120.0);
            c.mac.e2ekic.contention_reduction = rng.random_bool(0.5);
            c
        };
        cfg.sim.duration_s = 2.0;
        let sc = cfg.build().unwrap();
        let mut opts = RunOptions::new(MacKind::E2ekic, rng.random());
        opts.trace = TraceMode::Protocol;
        let out = simulate(&cfg, &sc, &opts).unwrap();
        total.merge(check_invariants(&out.protocol, cfg.mac.retry_limit));
        runs += 1;
    }
    let v = total.violations();
    report(
        3,
        v == 0 && total.exchanges >= MIN_EXCHANGES,
        format!("{runs} runs, {} exchanges ({} reached Stage II), {v} violations", total.exchanges, total.stage2_exchanges),
    );
    if v > 0 {
        println!("{total:?}");
    }
}

#[test]
fn criterion_4_pipeline_oracle() {
    let n = 7u64;
    // Initiator at the source, so A = 0 and P = N - 1. Stage I: the RTS and
    // P CTS slots of SIFS + CTS. Stage II: the DATA airtime plus two
    // frame-length differences (SIFS + PHY + MAC header). ACK stage: floor(N/2)
    // paired slots of SIFS + ACK. Then DIFS before the next RTS, with no backoff.
    let theta = 10 + 304;
    let frame_diff = 10 + 192 + 246;
    let cycle = 352 + (n - 1) * theta + 8000 + 2 * frame_diff + (n / 2) * theta + 50;
    assert_eq!(cycle, 12_124);

    let mut cfg = chain(n as usize);
    cfg.channel = ChannelConfig::protocol(200.0);
    cfg.traffic.arrival = Arrival::Saturated;
    cfg.mac.e2ekic.backoff = BackoffPolicy::Fixed { w: 1 };
    cfg.mac.e2ekic.initiator_position = Some(1);
    cfg.mac.e2ekic.contention_reduction = false;
    cfg.sim.duration_s = 5.0;
    let sc = cfg.build().unwrap();
    let mut opts = RunOptions::new(MacKind::E2ekic, 1);
    opts.trace = TraceMode::Protocol;
    opts.record_hops = true;
    let out = simulate(&cfg, &sc, &opts).unwrap();

    let gaps = |ts: Vec<u64>| -> Vec<u64> { ts.windows(2).map(|w| w[1] - w[0]).collect() };
    let rts = gaps(out.protocol.iter().filter(|r| r.kind == "RTS").map(|r| r.t).collect());
    let arrivals: Vec<u64> = out.stats.hops.iter().filter(|h| h.end_to_end).map(|h| h.t).collect();
    let deliveries = gaps(arrivals.clone());
    let off = |g: &[u64]| g.iter().map(|&x| x.abs_diff(cycle)).max().unwrap_or(u64::MAX);
    let (rts_err, del_err) = (off(&rts), off(&deliveries));
    // steady state: deliveries in the window match window / cycle
    let expected = out.stats.window_s() * 1e6 / cycle as f64;
    let rate_ok = (arrivals.len() as f64 - expected).abs() <= 1.0;
    report(
        4,
        rts_err <= CYCLE_TOL_US && del_err <= CYCLE_TOL_US && rate_ok && deliveries.len() > 300,
        format!(
            "cycle {cycle} us; max RTS spacing error {rts_err} us, max delivery spacing error {del_err} us, {} deliveries vs {expected:.1} expected",
            arrivals.len()
        ),
    );
}

#[test]
fn criterion_5_chain_comparison() {
    let mut cfg = chain(7);
    cfg.sim.seeds = SEEDS.to_vec();
    cfg.sim.duration_s = 10.0;
    let mut sat = cfg.clone();
    sat.traffic.arrival = Arrival::Saturated;
    let res = run_plan(&ExperimentPlan::new("chain7", sat), None).unwrap();
    let kic = mean_throughput(&select(&res, MacKind::E2ekic, None));
    let dcf = mean_throughput(&select(&res, MacKind::Dcf, None));
    let gain = kic / dcf;

    let mut plan = ExperimentPlan::new("chain7", cfg);
    plan.sweep = Sweep {
        axis: kicnet::experiment::SweepAxis::PacketRate,
        values: CHAIN_DELAY_RATES.to_vec(),
    };
    let res = run_plan(&plan, None).unwrap();
    let mut delays = Vec::new();
    for rate in CHAIN_DELAY_RATES {
        let k = mean_delay(&select(&res, MacKind::E2ekic, Some(rate)));
        let d = mean_delay(&select(&res, MacKind::Dcf, Some(rate)));
        delays.push((rate, k / 1000.0, d / 1000.0));
    }
    let delay_ok = delays.iter().all(|&(_, k, d)| k < d);
    let gain_ok = (CHAIN_GAIN.0..=CHAIN_GAIN.1).contains(&gain);
    let table: Vec<String> = delays.iter().map(|(r, k, d)| format!("{r}: {k:.1}/{d:.1} ms")).collect();
    report(
        5,
        gain_ok && delay_ok,
        format!(
            "saturated gain {gain:.2} ({:.0} vs {:.0} kbit/s); delay E2E-KIC/DCF {}",
            kic / 1e3,
            dcf / 1e3,
            table.join(", ")
        ),
    );
}

fn grid(d: f64, w: u32) -> Config {
    let mut c = Config::default();
    c.topology = TopologyConfig::Grid {
        rows: 10,
        cols: 10,
        d,
        r: 200.0,
        n_path: 10,
        initiator: 6,
        flows: GridFlows::Clip,
    };
    c.channel = ChannelConfig::protocol(200.0);
    c.traffic.arrival = Arrival::Saturated;
    c.traffic.saturate_relays = true;
    c.mac.e2ekic.backoff = BackoffPolicy::Fixed { w };
    c.mac.e2ekic.hop_limits = Some((5, 5));
    c.mac.e2ekic.contention_reduction = false;
    c.sim.duration_s = 10.0;
    c.sim.seeds = SEEDS.to_vec();
    c
}

#[test]
fn criterion_6_grid_consistency() {
    let mut ok = true;
    let mut lines = Vec::new();
    let mut sim_s = std::collections::BTreeMap::new();
    let mut ana_s = std::collections::BTreeMap::new();
    for d in [110.0, 150.0] {
        for w in [300, 700] {
            let mut plan = ExperimentPlan::new("grid", grid(d, w));
            plan.macs = vec![MacKind::E2ekic];
            let res = run_plan(&plan, None).unwrap();
            let sim = mean(res.iter().map(|r| node_throughput(&r.stats, r.include.as_deref()).unwrap())) / 1e6;
            let ana = solve_fixed_point(&SaturationParams::grid(d, 200.0, w).unwrap()).unwrap().s;
            let rel = (sim - ana).abs() / ana;
            ok &= rel <= GRID_REL_TOL;
            sim_s.insert((d as u32, w), sim);
            ana_s.insert((d as u32, w), ana);
            lines.push(format!("d={d} W={w}: sim {:.1} vs model {:.1} kbit/s ({:+.0}%)", sim * 1e3, ana * 1e3, (sim - ana) / ana * 100.0));
        }
    }
    let order = [300, 700].iter().all(|&w| sim_s[&(150, w)] > sim_s[&(110, w)] && ana_s[&(150, w)] > ana_s[&(110, w)]);
    report(6, ok && order, format!("{}; sparse above dense: {order}", lines.join("; ")));
}

#[test]
fn criterion_7_window_trend() {
    let mut bad = Vec::new();
    for d in [110.0, 150.0] {
        let s: Vec<f64> = (1..=7)
            .map(|k| solve_fixed_point(&SaturationParams::grid(d, 200.0, 100 * k).unwrap()).unwrap().s)
            .collect();
        if s.windows(2).any(|w| w[1] < w[0]) {
            bad.push(format!("d={d}: {s:?}"));
        }
    }
    report(7, bad.is_empty(), format!("S non-decreasing over W=100..700 for both grids; offenders {bad:?}"));
}

#[test]
fn criterion_8_determinism() {
    let csv_of = |threads: Option<usize>| {
        let mut cfg = chain(6);
        cfg.sim.duration_s = 2.0;
        cfg.sim.seeds = vec![11, 12, 13];
        let mut plan = ExperimentPlan::new("det", cfg);
        plan.sweep = Sweep::parse("packet_rate=30,90").unwrap();
        let mut buf = Vec::new();
        write_results(&mut buf, &run_plan(&plan, threads).unwrap()).unwrap();
        buf
    };
    let a = csv_of(Some(1));
    let b = csv_of(Some(1));
    let c = csv_of(Some(4));
    let mut g = grid(150.0, 300);
    g.sim.duration_s = 1.0;
    g.sim.seeds = vec![5];
    let once = |threads| {
        let mut buf = Vec::new();
        write_results(&mut buf, &run_plan(&ExperimentPlan::new("g", g.clone()), threads).unwrap()).unwrap();
        buf
    };
    let grid_same = once(Some(1)) == once(Some(3));
    report(8, a == b && a == c && grid_same, format!("{} bytes of chain results, identical across repeats and thread counts; grid identical: {grid_same}", a.len()));
}

#[test]
fn criterion_9_random_topologies() {
    let mut res = Vec::new();
    for seed in SEEDS {
        let mut cfg = Config::default();
        cfg.topology = TopologyConfig::Random {
            n_nodes: 20,
            width: 800.0,
            height: 800.0,
            n_flows: 7,
            seed,
        };
        cfg.sim.seeds = vec![seed];
        cfg.sim.duration_s = 10.0;
        let mut plan = ExperimentPlan::new(format!("random{seed}"), cfg);
        plan.sweep = Sweep {
            axis: kicnet::experiment::SweepAxis::PacketRate,
            values: RANDOM_RATES.to_vec(),
        };
        res.extend(run_plan(&plan, None).unwrap());
    }
    let mut gains = Vec::new();
    let mut delay_ok = true;
    let mut rows = Vec::new();
    for rate in RANDOM_RATES {
        let k = select(&res, MacKind::E2ekic, Some(rate));
        let d = select(&res, MacKind::Dcf, Some(rate));
        let g = mean_throughput(&k) / mean_throughput(&d);
        gains.push(g);
        let (kd, dd) = (mean_delay(&k), mean_delay(&d));
        if rate >= RANDOM_DELAY_FROM {
            delay_ok &= kd < dd;
        }
        rows.push(format!("{rate}: x{g:.2}, {:.0}/{:.0} ms", kd / 1e3, dd / 1e3));
    }
    let gain = mean(gains);
    let gain_ok = (RANDOM_GAIN.0..=RANDOM_GAIN.1).contains(&gain);
    report(9, gain_ok && delay_ok, format!("mean gain {gain:.2}; per rate (gain, delay E2E-KIC/DCF) {}", rows.join(", ")));
}

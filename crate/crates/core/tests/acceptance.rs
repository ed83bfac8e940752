//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use rugsim::dispute::{DisputeError, Side};
use rugsim::figures::linear_grid;
use rugsim::fixed::FixedAmount;
use rugsim::harness::{golden, load_scenario, load_scenario_file, Engine, Trace};
use rugsim::ids::{AccountId, BlockTime, ChainId, PoolId, TokenId, VaultId};
use rugsim::insurance::{InsuranceBook, InsuranceParams};
use rugsim::ledger::Ledger;
use rugsim::market::{default_floor, PoolState, PriceProcess};
use rugsim::perps::{funding_rate, funding_rate_final, Direction, FundingParams, PerpBook, PerpsParams};
use rugsim::rugproof::{Rugproof, RugproofParams, SlashParams};
use rugsim::tokenomics::target_supply;
use rugsim::vault::{anticoin_value, cumulative_penalty, whale_penalty};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check, u64);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn peg_curve() -> Check {
    let p0 = FixedAmount::from_int(100);
    let process = PriceProcess::scam(p0, fa("10"));
    ensure(process.price(FixedAmount::ZERO).map_err(|e| e.to_string())? == p0, || "C_r(0) != 100".into())?;
    let grid = linear_grid(fa("0.01"), fa("200"), 200);
    let mut prev: Option<FixedAmount> = None;
    for c in &grid {
        let v = anticoin_value(p0, *c).map_err(|e| e.to_string())?;
        if *c >= p0 {
            ensure(v.is_zero(), || format!("value {v} at price {c} >= 100"))?;
            continue;
        }
        let oracle = ln_scaled(&(rational(p0) / rational(*c)));
        let err = abs_error(v, &oracle);
        ensure(err <= 2e-9, || format!("ln(100/{c}) off by {err:e}"))?;
        if *c > default_floor() {
            if let Some(p) = prev {
                ensure(v < p, || format!("not strictly decreasing at {c}"))?;
            }
            prev = Some(v);
        }
    }
    Ok(())
}

fn supply_curve() -> Check {
    let s0 = FixedAmount::ONE;
    for m in 1..=16u32 {
        let v = to_fixed(&exp_int_scaled(m));
        let got = target_supply(v, s0).map_err(|e| e.to_string())?;
        let want = BigRational::new(BigInt::from(1), BigInt::from(m));
        let err = quanta_from(got, &want);
        ensure(err <= BigRational::from_integer(BigInt::from(4)), || format!("m={m}: {got} vs 1/{m}"))?;
    }
    let s0 = FixedAmount::from_int(1000);
    let mut prev = FixedAmount::MAX;
    for v in linear_grid(FixedAmount::ZERO, fa("1000000"), 1000) {
        let t = target_supply(v, s0).map_err(|e| e.to_string())?;
        ensure(t <= prev, || format!("target rises at {v}"))?;
        prev = t;
    }
    Ok(())
}

fn whale_penalty_check() -> Check {
    let k = fa("0.01");
    for (l, lf) in [("1.5", 1.5f64), ("2", 2.0), ("3", 3.0)] {
        let lambda = fa(l);
        for h in 1..=100i64 {
            let hh = FixedAmount::from_int(h);
            let p1 = whale_penalty(hh, k, lambda).map_err(|e| e.to_string())?;
            let p2 = whale_penalty(FixedAmount::from_int(2 * h), k, lambda).map_err(|e| e.to_string())?;
            ensure(p2 > p1.mul_int(2).unwrap(), || format!("λ={l} H={h}: P(2H)={p2} <= 2P(H)={p1}"))?;
            let oracle = 0.01 * (h as f64).powf(lf);
            let rel = (p1.to_f64() - oracle).abs() / oracle;
            ensure(rel <= 1e-6, || format!("λ={l} H={h}: {p1} vs {oracle}"))?;
        }
    }
    Ok(())
}

fn sybil_dominance() -> Check {
    let one = BigRational::from_integer(BigInt::from(1));
    for g in ["0.05", "0.1"] {
        let gamma = fa(g);
        for h in 1..=100i64 {
            let hh = FixedAmount::from_int(h);
            let one_shot = hh.checked_mul(gamma).unwrap();
            for dg in ["0.005", "0.01", "0.02"] {
                let dg = fa(dg);
                let mut prev = FixedAmount::ZERO;
                for n in 1..=10u64 {
                    let p = cumulative_penalty(hh, n, gamma, dg).map_err(|e| e.to_string())?;
                    let exact = cumulative_oracle(hh, n, gamma, dg);
                    ensure(quanta_from(p, &exact) <= one, || format!("H={h} n={n}: {p} off oracle"))?;
                    ensure(p > one_shot, || format!("H={h} n={n}: {p} <= H·γ"))?;
                    ensure(p > prev, || format!("H={h} n={n}: not increasing in n"))?;
                    prev = p;
                }
            }
            for n in 1..=10u64 {
                let p = cumulative_penalty(hh, n, gamma, FixedAmount::ZERO).map_err(|e| e.to_string())?;
                ensure((p - one_shot).abs() <= FixedAmount::QUANTUM, || format!("H={h} n={n}: Δγ=0 gives {p}"))?;
                let exact = cumulative_oracle(hh, n, gamma, FixedAmount::ZERO);
                ensure(quanta_from(p, &exact) <= one, || format!("H={h} n={n}: Δγ=0 off oracle"))?;
            }
        }
    }
    Ok(())
}

fn pool(fee_bps: u32) -> PoolState {
    PoolState::new(
        PoolId(0),
        AccountId::solo(100),
        TokenId(0),
        TokenId(1),
        fa("1000000"),
        fa("250000"),
        fee_bps,
        AccountId::solo(1),
    )
    .unwrap()
}

fn amm() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for fee in [0u32, 30] {
        let mut p = pool(fee);
        let mut done = 0;
        while done < 10_000 {
            let input = if rng.gen_bool(0.5) { TokenId(0) } else { TokenId(1) };
            let reserve = if input == TokenId(0) { p.reserve_x } else { p.reserve_y };
            let dx = FixedAmount::from_raw(rng.gen_range(1_000..=reserve.raw() / 20));
            let k0 = p.invariant();
            if p.swap(input, dx).is_err() {
                continue;
            }
            done += 1;
            let k1 = p.invariant();
            ensure(k1 >= k0, || format!("fee {fee}: k decreased on swap {done}"))?;
            if fee == 0 {
                // at most one output quantum above the exact curve
                let r_in = BigInt::from(if input == TokenId(0) { p.reserve_x.raw() } else { p.reserve_y.raw() });
                ensure(&k1 - &k0 < r_in, || format!("swap {done}: k grew by more than one quantum"))?;
            }
        }
    }
    Ok(())
}

fn funding() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let anticoin = TokenId(2);
    let (escrow, treasury) = (AccountId::solo(90), AccountId::solo(91));
    let alpha = fa("0.01");
    let l_min = fa("1000");
    for case in 0..500u64 {
        let mut ledger = Ledger::new();
        let params = PerpsParams::new(FundingParams { alpha_base: alpha, l_min, interval_blocks: 1 });
        let mut book = PerpBook::new(params, escrow, treasury).unwrap();
        let n = rng.gen_range(1..12u32);
        for u in 0..n {
            let user = AccountId::solo(u + 1);
            let coll = FixedAmount::from_raw(rng.gen_range(1_000_000_000..100_000_000_000));
            ledger.mint(anticoin, user, coll).unwrap();
            let dir = if rng.gen_bool(0.5) { Direction::Long } else { Direction::Short };
            let lev = FixedAmount::from_int(rng.gen_range(1..=10));
            let at = BlockTime::new(ChainId(0), 0);
            book.open_position(&mut ledger, user, VaultId(0), anticoin, fa("100"), coll, lev, dir, fa("20"), at)
                .map_err(|e| e.to_string())?;
        }
        let l_pool = FixedAmount::from_raw(rng.gen_range(1_000_000_000..10_000_000_000_000));
        let before = ledger.supply(anticoin);
        let escrowed = book.escrowed(anticoin);
        let report = book
            .apply_funding(&mut ledger, VaultId(0), l_pool, BlockTime::new(ChainId(0), 1))
            .map_err(|e| e.to_string())?
            .ok_or("no funding report")?;
        ensure(!report.rate.is_negative() && report.rate <= alpha, || format!("case {case}: F={}", report.rate))?;
        if l_pool >= l_min {
            ensure(report.rate_final <= report.rate.mul_int(2).unwrap(), || format!("case {case}: F_final > 2F"))?;
        }
        let net: FixedAmount = report.transfers.iter().map(|(_, d)| *d).sum::<FixedAmount>() + report.to_treasury;
        ensure(net.abs() <= FixedAmount::QUANTUM, || format!("case {case}: transfers net {net}"))?;
        let after = book.escrowed(anticoin) + ledger.balance(treasury, anticoin);
        ensure(after == escrowed && ledger.supply(anticoin) == before, || {
            format!("case {case}: collateral not conserved")
        })?;
    }
    for n_long in 0..20u64 {
        for n_short in 0..20u64 {
            if n_long + n_short == 0 {
                continue;
            }
            let f = funding_rate(n_long, n_short, alpha).map_err(|e| e.to_string())?;
            ensure(!f.is_negative() && f <= alpha, || format!("F({n_long},{n_short})={f}"))?;
            for l in ["1000", "1500", "1000000"] {
                let ff = funding_rate_final(f, l_min, fa(l)).map_err(|e| e.to_string())?;
                ensure(ff <= f.mul_int(2).unwrap(), || format!("F_final={ff} > 2F at L_pool={l}"))?;
            }
        }
    }
    Ok(())
}

fn at(h: u64) -> BlockTime {
    BlockTime::new(ChainId(0), h)
}

fn fraction(rng: &mut ChaCha8Rng, lo: i128, hi: i128) -> FixedAmount {
    FixedAmount::from_raw(rng.gen_range(lo..=hi))
}

fn rugproof_case(rng: &mut ChaCha8Rng) -> Check {
    let token = TokenId(0);
    let (escrow, treasury) = (AccountId::solo(90), AccountId::solo(91));
    let params = RugproofParams {
        slash: SlashParams {
            alpha_slash: fraction(rng, 0, 1_000_000_000),
            gamma_slash: fraction(rng, 0, 1_000_000_000),
            claimant_share: fraction(rng, 0, 1_000_000_000),
            z_min: fa("1"),
            challenge_blocks: rng.gen_range(1..10),
        },
        x_min: fa("0.01"),
        forfeit_losing_votes: rng.gen_bool(0.5),
    };
    let mut ledger = Ledger::new();
    for a in 1..30 {
        ledger.mint(token, AccountId::solo(a), FixedAmount::from_raw(rng.gen_range(1..1_000_000) * 1_000_000)).unwrap();
    }
    let total = ledger.supply(token);
    let mut rp = Rugproof::new(params, escrow, treasury).unwrap();
    let issuer = AccountId::solo(1);
    let issued = ledger.balance(issuer, token);
    let iss = match rp.issue_bonded_token(&mut ledger, issuer, token, issued, fraction(rng, 10_000_000, 1_000_000_000))
    {
        Ok(i) => i,
        Err(DisputeError::Ledger(_)) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let bond = rp.issuance(iss).unwrap().bond;
    let claimant = AccountId::solo(2);
    let claim = match rp.submit_rug_claim(&mut ledger, claimant, iss, fraction(rng, 0, 1_000_000_000), at(1)) {
        Ok(c) => c,
        Err(DisputeError::Ledger(_)) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let claim_bond = rp.claim(claim).unwrap().claim_bond;
    for v in 3..rng.gen_range(3..30) {
        let voter = AccountId::solo(v);
        let dep = FixedAmount::from_raw(rng.gen_range(1..100) * 1_000_000_000);
        let side = if rng.gen_bool(0.5) { Side::For } else { Side::Against };
        let _ = rp.cast_vote(&mut ledger, claim, voter, dep, side, at(1 + rng.gen_range(0..3)));
    }
    let locked = ledger.balance(escrow, token);
    let r = rp.resolve_claim(&mut ledger, claim, at(100)).map_err(|e| e.to_string())?;
    let paid: FixedAmount = r.payouts.iter().map(|p| p.amount).sum();
    let bonded = if r.upheld { FixedAmount::ZERO } else { bond };
    ensure(paid + bonded == locked, || format!("rugproof escrow in {locked}, out {paid}"))?;
    ensure(ledger.balance(escrow, token) == bonded, || "escrow balance left over".into())?;
    let cap = if r.upheld { bond } else { claim_bond };
    ensure(r.slashed <= cap, || format!("slash {} over bond {cap}", r.slashed))?;
    if !r.upheld {
        ensure(rp.release_issuance(&mut ledger, iss).map_err(|e| e.to_string())? == bond, || {
            "bond not returned".into()
        })?;
    }
    ensure(ledger.balance(escrow, token).is_zero(), || "escrow not empty".into())?;
    ensure(ledger.supply(token) == total, || "supply changed".into())
}

fn insurance_case(rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let token = TokenId(0);
    let (escrow, treasury) = (AccountId::solo(90), AccountId::solo(91));
    let params = InsuranceParams {
        alpha_comp: fraction(rng, 0, 1_000_000_000),
        gamma_pen: fraction(rng, 0, 1_000_000_000),
        escalation_bond_multiplier: fa("2"),
        max_escalations: rng.gen_range(0..3),
        tau_challenge: rng.gen_range(1..5),
        tau_vote: rng.gen_range(1..5),
        z_min: fa("1"),
        x_min: fa("0.01"),
    };
    let mut ledger = Ledger::new();
    for a in 1..30 {
        ledger
            .mint(token, AccountId::solo(a), FixedAmount::from_raw(rng.gen_range(1_000..1_000_000) * 1_000_000_000))
            .unwrap();
    }
    let total = ledger.supply(token);
    let (insurer, insured) = (AccountId::solo(1), AccountId::solo(2));
    let mut book = InsuranceBook::new(params.clone(), escrow, treasury).unwrap();
    let value = FixedAmount::from_raw(rng.gen_range(1..1_000) * 1_000_000_000);
    let policy = match book.issue_policy(
        &mut ledger,
        insurer,
        insured,
        token,
        value,
        fraction(rng, 10_000_000, 1_000_000_000),
        1000,
        at(0),
    ) {
        Ok(p) => p,
        Err(DisputeError::Ledger(_)) => return Ok(false),
        Err(e) => return Err(e.to_string()),
    };
    let insurer_bond = book.policy(policy).unwrap().insurer_bond;
    let claim = book
        .submit_claim(&mut ledger, policy, insured, fraction(rng, 0, 200_000_000), at(1))
        .map_err(|e| e.to_string())?;
    let joiners = rng.gen_range(0..4);
    for j in 0..joiners {
        let loss = FixedAmount::from_raw(rng.gen_range(1..500) * 1_000_000_000);
        book.join_claim(&mut ledger, claim, AccountId::solo(10 + j), loss, fraction(rng, 0, 100_000_000), at(1))
            .map_err(|e| e.to_string())?;
    }
    let disputed = rng.gen_bool(0.6);
    if disputed {
        book.dispute_claim(&mut ledger, claim, AccountId::solo(3), fraction(rng, 0, 200_000_000), at(1))
            .map_err(|e| e.to_string())?;
    }
    let bonds_at_risk: FixedAmount = {
        let c = book.claim(claim).unwrap();
        c.claim_bond + c.joiners.iter().map(|j| j.bond).sum::<FixedAmount>()
    };
    let insurer_free = ledger.balance(insurer, token);
    let mut locked_in = ledger.balance(escrow, token) - insurer_bond;
    let mut now = 1;
    let mut paid = FixedAmount::ZERO;
    let final_res = loop {
        if matches!(book.claim(claim).unwrap().phase, rugsim::insurance::ClaimPhase::Voting) {
            for v in 20..rng.gen_range(20..29) {
                let dep = FixedAmount::from_raw(rng.gen_range(1..50) * 1_000_000_000);
                let side = if rng.gen_bool(0.5) { Side::For } else { Side::Against };
                let before = ledger.balance(escrow, token);
                if book.cast_vote(&mut ledger, claim, AccountId::solo(v), dep, side, at(now)).is_ok() {
                    locked_in += ledger.balance(escrow, token) - before;
                }
            }
        }
        if matches!(book.claim(claim).unwrap().phase, rugsim::insurance::ClaimPhase::Decided { .. })
            && rng.gen_bool(0.5)
        {
            let party = [insured, AccountId::solo(3), insurer][rng.gen_range(0..3)];
            let before = ledger.balance(escrow, token);
            if book.escalate(&mut ledger, claim, party, at(now)).is_ok() {
                locked_in += ledger.balance(escrow, token) - before;
                continue;
            }
        }
        now += 1;
        match book.resolve_insurance(&mut ledger, claim, at(now)) {
            Ok(r) if r.is_final => break r,
            Ok(r) => paid += r.payouts.iter().map(|p| p.amount).sum::<FixedAmount>(),
            Err(DisputeError::Early { .. }) => {}
            Err(e) => return Err(e.to_string()),
        }
        if now > 200 {
            return Err("claim never finalized".into());
        }
    };
    paid += final_res.payouts.iter().map(|p| p.amount).sum::<FixedAmount>();
    // the approved path also locks the insurer's I_v payment before paying it out
    let insurer_paid = if final_res.approved { value.min(insurer_free) } else { FixedAmount::ZERO };
    let bond_left = if final_res.approved { FixedAmount::ZERO } else { insurer_bond };
    ensure(paid == locked_in + insurer_paid + insurer_bond - bond_left, || {
        format!("insurance escrow in {}, out {paid}", locked_in + insurer_paid + insurer_bond - bond_left)
    })?;
    ensure(ledger.balance(escrow, token) == bond_left, || "escrow balance left over".into())?;
    ensure(final_res.penalty <= bonds_at_risk, || format!("penalty {} over bonds {bonds_at_risk}", final_res.penalty))?;
    let exact_case = final_res.approved && !disputed && insurer_free >= value;
    if exact_case {
        let want = value + insurer_bond.checked_mul(params.alpha_comp).unwrap();
        ensure(final_res.compensation == want, || format!("compensation {} != {want}", final_res.compensation))?;
    }
    if !final_res.approved {
        book.expire_policy(&mut ledger, policy, at(2000)).map_err(|e| e.to_string())?;
    }
    ensure(ledger.balance(escrow, token).is_zero(), || "escrow not empty".into())?;
    ensure(ledger.supply(token) == total, || "supply changed".into())?;
    Ok(exact_case)
}

fn dispute_fuzz() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1500 {
        rugproof_case(&mut rng).map_err(|e| format!("rugproof case {i}: {e}"))?;
    }
    let mut undisputed = 0;
    for i in 0..1500 {
        undisputed += insurance_case(&mut rng).map_err(|e| format!("insurance case {i}: {e}"))? as u32;
    }
    ensure(undisputed >= 100, || format!("only {undisputed} approved undisputed claims"))
}

fn scam_e2e() -> Check {
    let path = scenario_path("scam_e2e.json");
    let scenario = load_scenario_file(&path).map_err(|e| e.to_string())?;
    ensure(scenario.seed == 42, || "seed is not 42".into())?;
    let g = golden::compute(scenario).map_err(|e| e.to_string())?;
    let pinned = golden::load(&golden::default_path(&path)).map_err(|e| e.to_string())?;
    ensure(g == pinned, || "result differs from the golden file".into())?;
    let base = g.values["unprotected_user"];
    for who in ["intent_user", "protected_user"] {
        ensure(g.values[who] > base, || format!("{who} {} <= unprotected {base}", g.values[who]))?;
        ensure(g.margins[who] == g.values[who] - base, || format!("{who} margin mismatch"))?;
    }
    Ok(())
}

fn run_file(name: &str) -> Result<Trace, String> {
    let scenario = load_scenario_file(&scenario_path(name)).map_err(|e| e.to_string())?;
    Ok(Engine::new(scenario).map_err(|e| e.to_string())?.run(None))
}

fn determinism() -> Check {
    let t0 = Instant::now();
    let a = run_file("reference.json")?;
    let first = t0.elapsed();
    let b = run_file("reference.json")?;
    ensure(a.trace_hash == b.trace_hash, || "trace hashes differ".into())?;
    ensure(a.events == b.events, || "event logs differ".into())?;
    let blocks = a.telemetry.iter().map(|r| r.height).max().unwrap_or(0);
    ensure(blocks == 10_000, || format!("reference ran {blocks} blocks"))?;
    ensure(first < Duration::from_secs(5), || format!("reference run took {first:?}"))
}

fn supply_identity(trace: &Trace) -> Check {
    let chain = trace.state["rugsafe_chain"].as_u64().ok_or("no rugsafe chain")? as u32;
    let initial = trace.state["supply"]["initial_supply"].as_str().ok_or("no initial supply")?;
    let mut prev: FixedAmount = initial.parse().map_err(|_| "bad initial supply")?;
    let mut rows = 0;
    for r in trace.telemetry.iter().filter(|r| r.chain == chain) {
        ensure(r.current_supply - prev == r.emission - r.burned, || format!("ΔR identity fails at {}", r.height))?;
        prev = r.current_supply;
        rows += 1;
    }
    ensure(rows > 0, || "no telemetry rows".into())
}

fn scarcity_pair() -> Result<(FixedAmount, FixedAmount), String> {
    let doc = |burn: bool| {
        let action = if burn { "burn" } else { "withdraw" };
        serde_json::json!({
            "name": format!("scarcity_{action}"),
            "seed": 11,
            "chains": [{"name": "main", "blocks": 30, "rugsafe": true}],
            "tokens": [{"name": "RUG", "chain": "main", "price": {"fixed": "2"}}],
            "vaults": [{"token": "RUG", "params": {"receipt_kind": "fungible", "omega": "0.01", "theta": "0.02",
                "penalty_k": "0", "penalty_lambda": "2", "gamma_base": "0.05", "delta_gamma": "0"}}],
            "tokenomics": {"s0": "1000", "epsilon_rate": "1", "beta_burn": "1000000", "kappa": "1",
                "initial_supply": "5000"},
            "agents": (0..4).map(|i| serde_json::json!({
                "name": format!("user{i}"), "kind": "retail", "balances": {"RUG": "500"},
                "script": [{"at": 1, "do": {"deposit": {"token": "RUG", "amount": "500"}}},
                           {"at": 5 + i, "do": {action: {"token": "RUG", "amount": "400"}}}]
            })).collect::<Vec<_>>()
        })
        .to_string()
    };
    let run = |burn: bool| -> Result<Trace, String> {
        let s = load_scenario(&doc(burn)).map_err(|e| e.to_string())?;
        let t = Engine::new(s).map_err(|e| e.to_string())?.run(None);
        ensure(t.failed_events == 0, || format!("{} failed events", t.failed_events))?;
        supply_identity(&t)?;
        Ok(t)
    };
    let burned = run(true)?;
    let baseline = run(false)?;
    let last = |t: &Trace| t.telemetry.last().map(|r| r.current_supply).unwrap_or_default();
    Ok((last(&burned), last(&baseline)))
}

fn tokenomics() -> Check {
    supply_identity(&run_file("reference.json")?)?;
    supply_identity(&run_file("scam_e2e.json")?)?;
    let (burned, baseline) = scarcity_pair()?;
    ensure(burned <= baseline, || format!("burning run supply {burned} > baseline {baseline}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("peg curve", peg_curve, 1),
        ("supply curve", supply_curve, 1),
        ("whale penalty", whale_penalty_check, 1),
        ("sybil dominance", sybil_dominance, 5),
        ("amm invariant", amm, 5),
        ("funding", funding, 5),
        ("dispute fuzz", dispute_fuzz, 10),
        ("scam e2e", scam_e2e, 10),
        ("determinism", determinism, 30),
        ("tokenomics", tokenomics, 30),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = check();
        let took = t0.elapsed();
        let result = result
            .and_then(|()| ensure(took < Duration::from_secs(*budget), || format!("took {took:?}, budget {budget}s")));
        match result {
            Ok(()) => println!("PASS {:>2} {name} ({:.2}s)", i + 1, took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({:.2}s): {e}", i + 1, took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

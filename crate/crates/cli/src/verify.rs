use divnet_core::identities::{identity_suite, special_case_suite, IdentityReport};
use divnet_core::scripts::{sample_chain, CHAIN_NAMES};
use divnet_core::{apply_with_tol, replay, ConvexFunctionSpec, Error, Network, RuleId, Tolerance};

use crate::Suite;

/// Runs the selected suites, printing one line per check. Returns whether
/// everything passed.
pub fn run(
    suite: Suite,
    specs: &[ConvexFunctionSpec],
    trials: u64,
    seed: u64,
    tol: Tolerance,
) -> Result<bool, Error> {
    let mut ok = true;
    let want = |s: Suite| suite == s || suite == Suite::All;
    if want(Suite::Identities) {
        for spec in specs {
            for r in identity_suite(spec, trials, seed) {
                ok &= print_report(&r);
            }
        }
    }
    if want(Suite::Special) {
        for r in special_case_suite(seed, trials) {
            ok &= print_report(&r);
        }
    }
    if want(Suite::Chains) {
        for spec in specs {
            for name in CHAIN_NAMES {
                ok &= chain(name, spec, tol);
            }
        }
    }
    if want(Suite::Rules) {
        for spec in specs {
            ok &= rules(spec, tol);
        }
    }
    Ok(ok)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn print_report(r: &IdentityReport) -> bool {
    let gap = r
        .max_mode_gap
        .map(|g| format!(" mode_gap {g:.11e}"))
        .unwrap_or_default();
    println!(
        "{} {} {} trials {} max_residual {:.11e}{gap} tol {:e}",
        verdict(r.passed()),
        r.name,
        r.generator,
        r.trials,
        r.max_residual,
        r.tolerance
    );
    for f in r.failures.iter().take(3) {
        println!(
            "  trial {} (seed {}): {} inputs {}",
            f.trial, f.seed, f.reason, f.inputs
        );
    }
    r.passed()
}

fn chain(name: &str, spec: &ConvexFunctionSpec, tol: Tolerance) -> bool {
    let outcome = sample_chain(name, spec).and_then(|d| replay(&d, spec, tol));
    match outcome {
        Ok(r) => {
            println!(
                "{} chain {name} {} steps {} phi {:.12} max_drift {:.11e}",
                verdict(r.passed()),
                spec.id(),
                r.steps.len(),
                r.phi_initial,
                r.max_drift
            );
            r.passed()
        }
        Err(e) => {
            println!("FAIL chain {name} {}: {e}", spec.id());
            false
        }
    }
}

/// Every listed match on every intermediate network of the sample chains,
/// applied forward with checking and undone through its inverse.
fn rules(spec: &ConvexFunctionSpec, tol: Tolerance) -> bool {
    let mut networks: Vec<Network> = Vec::new();
    for name in CHAIN_NAMES {
        if let Ok(r) = sample_chain(name, spec).and_then(|d| replay(&d, spec, tol).map(|r| (d, r)))
        {
            let (d, r) = r;
            let mut net = d.initial.clone();
            networks.push(net.clone());
            for s in &r.steps {
                if let Ok((next, _)) = apply_with_tol(&net, &s.rule_match, spec, false, tol) {
                    net = next;
                    networks.push(net.clone());
                }
            }
        }
    }
    let mut all_ok = true;
    for rule in RuleId::ALL {
        let (mut applied, mut worst, mut failures) = (0usize, 0.0f64, Vec::new());
        for net in &networks {
            for m in divnet_core::rewrite::list_matches_with_tol(net, rule, spec, tol) {
                match apply_with_tol(net, &m, spec, true, tol) {
                    Ok((out, step)) => {
                        applied += 1;
                        worst = worst.max(step.residual);
                        match apply_with_tol(&out, &step.inverse, spec, true, tol) {
                            Ok((_, back)) => {
                                applied += 1;
                                worst = worst.max(back.residual);
                            }
                            Err(e) => {
                                failures.push(format!("inverse of {}: {e}", step.rule_match.rule))
                            }
                        }
                    }
                    Err(e) => failures.push(e.to_string()),
                }
            }
        }
        let pass = failures.is_empty();
        all_ok &= pass;
        println!(
            "{} rule {} {} applications {} max_residual {:.11e}",
            verdict(pass),
            rule.name(),
            spec.id(),
            applied,
            worst
        );
        for f in failures.iter().take(3) {
            println!("  {f}");
        }
    }
    all_ok
}

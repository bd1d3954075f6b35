use std::collections::BTreeMap;
use std::time::Instant;

use secagg_robust::crypto::{shamir_reconstruct, shamir_share};
use secagg_robust::field::FieldElement;
use secagg_robust::fixed::FixedVec;
use secagg_robust::secagg::{run_aggregation, AggregationConfig, Participant};
use secagg_robust::seed::rng_for;
use secagg_robust::zk::{DealerBudget, Lin, ZkSession};

use crate::exit;

const SEED: u64 = 0x5e1f;

type Check = Result<String, String>;

fn field_axioms() -> Check {
    let mut rng = rng_for(SEED, "selftest-field", &[]);
    for _ in 0..2000 {
        let a = FieldElement::random(&mut rng);
        let b = FieldElement::random(&mut rng);
        let c = FieldElement::random(&mut rng);
        if (a + b) + c != a + (b + c) || a * b != b * a || (a * b) * c != a * (b * c) {
            return Err(format!("associativity/commutativity fails at {a:?}, {b:?}, {c:?}"));
        }
        if a * (b + c) != a * b + a * c {
            return Err(format!("distributivity fails at {a:?}, {b:?}, {c:?}"));
        }
        if a - a != FieldElement::ZERO || a + FieldElement::ZERO != a || a * FieldElement::ONE != a {
            return Err(format!("identity fails at {a:?}"));
        }
        if let Some(inv) = a.inverse() {
            if a * inv != FieldElement::ONE {
                return Err(format!("inverse fails at {a:?}"));
            }
        } else if !a.is_zero() {
            return Err(format!("no inverse for nonzero {a:?}"));
        }
    }
    Ok("2000 random triples".into())
}

fn shamir_round_trips() -> Check {
    let mut rng = rng_for(SEED, "selftest-shamir", &[]);
    let recipients: Vec<u32> = (1..=7).collect();
    for t in 1..=7 {
        let secret = FieldElement::random(&mut rng);
        let shares = shamir_share(secret, t, &recipients, &mut rng).map_err(|e| e.to_string())?;
        for start in 0..=(7 - t) {
            let got = shamir_reconstruct(&shares[start..start + t], t).map_err(|e| e.to_string())?;
            if got != secret {
                return Err(format!("t = {t}: subset at {start} reconstructs the wrong secret"));
            }
        }
        if t > 1 && shamir_reconstruct(&shares[..t - 1], t).is_ok() {
            return Err(format!("t = {t}: reconstructed from t - 1 shares"));
        }
    }
    Ok("thresholds 1..=7 over 7 parties".into())
}

fn it_mac_relation(inject_fault: bool) -> Check {
    let mut rng = rng_for(SEED, "selftest-mac", &[]);
    let mut session = ZkSession::new(SEED);
    session.provision(DealerBudget {
        authentications: 32,
        triples: 0,
    });
    let mut values = Vec::new();
    for _ in 0..32 {
        let x = FieldElement::random(&mut rng);
        values.push((x, session.authenticate(x).map_err(|e| e.to_string())?));
    }
    if inject_fault {
        session.corrupt_prover_mac(values[7].1);
    }
    let delta = session.delta();
    for (i, &(x, v)) in values.iter().enumerate() {
        let (value, mac) = session.prover_view(v);
        if value != x || mac != session.verifier_key(v) + delta * value {
            return Err(format!("M[x] != K[x] + delta * x for value {i}"));
        }
        match session.open(&Lin::from(v)) {
            Ok(opened) if opened == x => {}
            Ok(_) => return Err(format!("value {i} opened to the wrong value")),
            Err(e) => return Err(format!("value {i}: {e}")),
        }
    }
    Ok("32 authenticated values".into())
}

fn mask_cancellation() -> Check {
    let mut rng = rng_for(SEED, "selftest-masks", &[]);
    let l = 16;
    let mut expected = vec![FieldElement::ZERO; l];
    let mut participants: Vec<Participant> = (1..=8u32)
        .map(|id| {
            let coords: Vec<FieldElement> = (0..l).map(|_| FieldElement::random(&mut rng)).collect();
            for (e, c) in expected.iter_mut().zip(&coords) {
                *e += *c;
            }
            Participant::honest(id, FixedVec::from_coords(coords, 16), SEED + id as u64)
        })
        .collect();
    let config = AggregationConfig::new(SEED);
    let t = run_aggregation(&config, &mut participants, &BTreeMap::new()).map_err(|e| e.to_string())?;
    if t.aggregate.coords != expected {
        return Err("unmasked aggregate differs from the plaintext sum".into());
    }
    Ok(format!("n = 8, l = {l}, {} messages", t.messages.len()))
}

pub fn cmd_selftest(inject_fault: bool) -> u8 {
    let start = Instant::now();
    let checks: [(&str, Check); 4] = [
        ("field axioms", field_axioms()),
        ("shamir round trips", shamir_round_trips()),
        ("it-mac relation", it_mac_relation(inject_fault)),
        ("mask cancellation", mask_cancellation()),
    ];
    let mut failed = 0;
    println!("{:<20} {:<6} detail", "check", "result");
    for (name, result) in &checks {
        let (status, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{name:<20} {status:<6} {detail}");
    }
    println!("{} of {} checks passed in {:.2?}", checks.len() - failed, checks.len(), start.elapsed());
    if failed == 0 {
        exit::OK
    } else {
        exit::CHECK_FAILED
    }
}

//! The default bases for the full-data function and the augmentation space,
//! exported as a JSON spec that a `fit` config can take back in edited form.

use nmipw::basis::{build_default_bases, BasisSpec, Term};
use nmipw::simulation::{logistic_ef, registry, schema};

fn main() -> nmipw::Result<()> {
    let (sch, reg, ef) = (schema(), registry(), logistic_ef());
    let bases = build_default_bases(&sch, &reg, &ef);

    let h: Vec<String> = bases.full.h.iter().map(|t| t.label(&sch)).collect();
    println!("h ({} terms beyond the covariates): {}", h.len(), h.join(", "));
    for code in reg.incomplete_codes() {
        let terms: Vec<String> = bases.augmentation.block(code).iter().map(|t| t.label(&sch)).collect();
        println!("pattern {code} [{}]: {}", reg.mask_string(code), terms.join(", "));
    }
    println!("augmentation dimension {}", bases.augmentation.dim());

    let mut spec = BasisSpec::from_bases(&bases);
    // a smaller space: main effects only for every pattern
    for (code, terms) in spec.augmentation.iter_mut() {
        let code: usize = code.parse().expect("numeric pattern code");
        *terms = std::iter::once(Term::Const)
            .chain(reg.observed(code).iter().map(|&var| Term::Main { var }))
            .collect();
    }
    let json = serde_json::to_string_pretty(&spec)?;
    println!("{json}");
    let back: BasisSpec = serde_json::from_str(&json)?;
    println!("reduced augmentation dimension {}", back.into_bases(&reg)?.augmentation.dim());
    Ok(())
}

//! Finite-difference audit of the benchmark and of every built-in field
//! family, then the same audit with a deliberately wrong gradient.

use tvswarm::audit::{derivative_audit, family_showcase, AuditSettings};
use tvswarm::problem::paper_benchmark;
use tvswarm::BarrierSchedule;

fn main() {
    let schedule = BarrierSchedule::new(100.0, 0.1).unwrap();
    let settings = AuditSettings::default();
    let (_, benchmark) = paper_benchmark();
    for (name, problems) in [("benchmark", benchmark), ("all families", family_showcase())] {
        let audit = derivative_audit(&problems, &schedule, &settings).unwrap();
        println!("{name}: max relative error {:.3e} over {} samples per agent", audit.max_error, audit.samples_per_agent);
        for f in audit.fields.iter().take(4) {
            println!("  agent {} {:<50} grad {:.1e} hess {:.1e} dt-grad {:.1e}", f.agent, f.field, f.errors.gradient, f.errors.hessian, f.errors.time_gradient);
        }
    }
    let (_, benchmark) = paper_benchmark();
    let faulty = derivative_audit(&benchmark, &schedule, &AuditSettings { gradient_fault: Some(1.001), ..settings }).unwrap();
    println!("gradient scaled by 1.001: max relative error {:.3e}", faulty.max_error);
}

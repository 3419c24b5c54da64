//! Exact dynamic and static CVaR on the two-period tree. The dynamic
//! measure picks the time-consistent plan; the static one precommits to a
//! plan it would abandon after the first step.
//!
//! cargo run --release --example tree_oracle

use dynrisk::oracle::{plan_distribution, static_precommitment, tree_dynamic_risk, FiniteTreeMdp};
use dynrisk::Spectrum;

fn main() -> dynrisk::Result<()> {
    let mdp = FiniteTreeMdp::two_period_example();
    let name = |node: usize, a: Option<usize>| -> String {
        a.map(|a| mdp.node(node).actions[a].label.clone())
            .unwrap_or_else(|| "-".into())
    };
    let upp = mdp.find("s1_up_prime").expect("fixture node");
    println!("alpha  dynamic  root  at s1_up'  static  plan");
    for alpha in [0.5, 0.7, 0.8, 0.9, 0.99] {
        let spectrum = Spectrum::cvar(alpha)?;
        let dynamic = tree_dynamic_risk(&mdp, &spectrum);
        let (plan, stat) = static_precommitment(&mdp, &spectrum);
        let plan_names: Vec<String> = plan.iter().map(|&a| name(0, Some(a))).collect();
        println!(
            "{alpha:<5}  {:>7.3}  {:<4}  {:<8}  {stat:>6.3}  {}",
            dynamic.values[0],
            name(0, dynamic.actions[0]),
            name(upp, dynamic.actions[upp]),
            plan_names.join("-")
        );
    }
    let dist = plan_distribution(&mdp, &[0, 1]).expect("plan fits the tree");
    println!("terminal cost of the up-down plan: {:?}", dist.values());
    Ok(())
}

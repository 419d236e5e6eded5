#[path = "properties/dynamics.rs"]
mod dynamics;

#[test]
fn evolution_keeps_trace_and_positivity() {
    dynamics::run("evolution_keeps_trace_and_positivity");
}

#[test]
fn closed_evolution_conserves_parity() {
    dynamics::run("closed_evolution_conserves_parity");
}

#[test]
fn lossy_evolution_keeps_parity_blocks() {
    dynamics::run("lossy_evolution_keeps_parity_blocks");
}

#[test]
fn steady_state_is_stationary() {
    dynamics::run("steady_state_is_stationary");
}

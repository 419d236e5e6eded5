#[path = "properties/analysis.rs"]
mod analysis;

#[test]
fn tracks_of_one_parity_never_cross() {
    analysis::run("tracks_of_one_parity_never_cross");
}

#[test]
fn top_pair_splitting_decays() {
    analysis::run("top_pair_splitting_decays");
}

#[test]
fn double_well_onset_is_at_half_detuning() {
    analysis::run("double_well_onset_is_at_half_detuning");
}

#[test]
fn fidelity_is_symmetric_and_bounded() {
    analysis::run("fidelity_is_symmetric_and_bounded");
}

#[test]
fn fidelity_grows_along_a_mixing_path() {
    analysis::run("fidelity_grows_along_a_mixing_path");
}

use proptest::prelude::*;

use super::*;

fn cal() -> Calibration {
    Calibration::from_toml(MOE_64L_CALIBRATION).unwrap()
}

fn baseline() -> ParallelismConfig {
    ParallelismConfig { tp: 1, cp: 1, ep: 8, pp: 8, vpp: 1, mbs: 1, dp: 256, accum: 16 }
}

#[test]
fn derive_dp_examples() {
    assert_eq!(derive_dp(2048, 1, 1, 8, 4096, 1).unwrap().0, 256);
    assert_eq!(derive_dp(16, 2, 1, 2, 64, 2).unwrap(), (4, 8));
    assert!(matches!(derive_dp(2048, 3, 1, 1, 4096, 1), Err(TunerError::NonDivisible(_))));
    assert!(matches!(derive_dp(16, 1, 1, 1, 24, 1), Err(TunerError::NonDivisible(_))));
    assert!(matches!(derive_dp(16, 0, 1, 1, 16, 1), Err(TunerError::NonPositive(_))));
}

#[test]
fn token_batches_convert_to_samples() {
    assert_eq!(Workload::from_tokens(2048, 16 << 20, 4096).unwrap().gbs_samples, 4096);
    assert!(Workload::from_tokens(2048, 1000, 4096).is_err());
}

#[test]
fn bundled_baseline_is_feasible() {
    let c = cal();
    let w = Workload::from_tokens(2048, 16 << 20, c.model.seq_len).unwrap();
    let (dp, accum) = derive_dp(2048, 1, 1, 8, w.gbs_samples, 1).unwrap();
    assert_eq!((dp, accum), (256, 16));
    let e = c.estimate(&baseline(), &w).unwrap();
    assert!(e.feasible, "{e:?}");
    assert!(e.step_time_s.is_finite() && e.step_time_s > 0.0);
    let file = ConstraintFile::from_toml(MOE_64L_CONSTRAINTS).unwrap();
    assert!(file.constraint.iter().all(|k| k.holds(&baseline(), &c, &w)));
    assert!(file.space.enumerate(&c.model, &w).contains(&baseline()));
}

#[test]
fn calibration_round_trips_and_rejects_junk() {
    let c = cal();
    assert_eq!(Calibration::from_toml(&c.to_toml()).unwrap(), c);
    assert!(Calibration::from_toml("[model]\nlayers = 1\n").is_err());
    let bad = MOE_64L_CALIBRATION.replace("launch_s = 0.0004", "launch_s = -1.0");
    assert!(matches!(Calibration::from_toml(&bad), Err(TunerError::Calibration(_))));
    let bad = MOE_64L_CALIBRATION.replace("[cost.cp_comm_s]\n1 = 0.0", "[cost.cp_comm_s]\none = 0.0");
    assert!(Calibration::from_toml(&bad).is_err());
}

#[test]
fn op_table_lookup_uses_largest_key_below() {
    let t = OpTable([(2, 1.0), (8, 3.0)].into_iter().collect());
    assert_eq!((t.at(1), t.at(2), t.at(4), t.at(8), t.at(64)), (1.0, 1.0, 1.0, 3.0, 3.0));
}

#[test]
fn vpp_shrinks_the_bubble() {
    let c = cal();
    let w = Workload::new(2048, 4096);
    let one = c.estimate(&baseline(), &w).unwrap();
    let two = c.estimate(&ParallelismConfig { vpp: 2, ..baseline() }, &w).unwrap();
    assert!(two.bubble_fraction < one.bubble_fraction);
    assert_eq!(one.bubble_fraction, 7.0 / (8.0 * 16.0));
    assert_eq!(two.bubble_fraction, 7.0 / (8.0 * 2.0 * 16.0));
}

#[test]
fn larger_microbatches_amortize_launches_without_communication() {
    let mut c = cal();
    c.cost = c.cost.without_communication();
    for mbs in [1u32, 2, 4] {
        let small = ParallelismConfig { mbs, ..baseline() };
        let big = ParallelismConfig { mbs: mbs * 2, ..baseline() };
        let ws = Workload::new(2048, 256 * mbs * 16);
        let wb = Workload::new(2048, 256 * mbs * 2 * 16);
        let (a, b) = (c.estimate(&small, &ws).unwrap(), c.estimate(&big, &wb).unwrap());
        assert!(b.time_per_sample_s <= a.time_per_sample_s);
    }
}

#[test]
fn memory_over_capacity_is_infeasible() {
    let mut c = cal();
    c.memory.capacity_gb = 1.0;
    let w = Workload::new(2048, 4096);
    assert!(!c.estimate(&baseline(), &w).unwrap().feasible);
    let space = ConstraintFile::default().space;
    assert_eq!(search(&space, &c, &w, &[], 5), Err(TunerError::NoFeasibleConfig));
}

#[test]
fn manual_stage_split_moves_the_bottleneck() {
    let c = cal();
    let even = Workload::new(2048, 4096);
    let mut skewed = even.clone();
    skewed.stage_layers = Some(vec![9, 8, 8, 8, 8, 8, 8, 7]);
    let (a, b) = (c.estimate(&baseline(), &even).unwrap(), c.estimate(&baseline(), &skewed).unwrap());
    assert!(b.step_time_s > a.step_time_s);
    skewed.stage_layers = Some(vec![9, 8]);
    assert_eq!(c.estimate(&baseline(), &skewed).unwrap(), a);
    skewed.stage_layers = Some(vec![1; 8]);
    assert!(c.estimate(&baseline(), &skewed).is_none());
}

#[test]
fn topology_constraints_keep_only_matching_configs() {
    let c = cal();
    let w = Workload::new(16, 64);
    let file = ConstraintFile::from_toml(MOE_64L_CONSTRAINTS).unwrap();
    let all = file.space.enumerate(&c.model, &w);
    let values = [Constraint::OneOf(Dim::Tp, vec![1]), Constraint::OneOf(Dim::Ep, vec![8])];
    let kept = prune(&all, &values, &c, &w);
    assert!(!kept.is_empty());
    assert!(kept.iter().all(|k| k.tp == 1 && k.ep == 8));
    assert_eq!(kept.len(), all.iter().filter(|k| k.tp == 1 && k.ep == 8).count());
    assert_eq!(prune(&all, &[], &c, &w), all);
}

#[test]
fn constraint_file_round_trips() {
    let f = ConstraintFile::from_toml(MOE_64L_CONSTRAINTS).unwrap();
    assert_eq!(f.constraint.len(), 3);
    assert_eq!(f.constraint[2], Constraint::FitsMemory);
    assert_eq!(ConstraintFile::from_toml(&f.to_toml()).unwrap(), f);
    assert!(ConstraintFile::from_toml("[[constraint]]\ndim = \"tp\"\n").is_err());
    let r = ConstraintFile::from_toml("[[constraint]]\ndim = \"mbs\"\nmax = 2\n").unwrap();
    assert_eq!(r.constraint, vec![Constraint::Range { dim: Dim::Mbs, min: None, max: Some(2) }]);
}

#[test]
fn search_on_bundled_files() {
    let c = cal();
    let w = Workload::from_tokens(2048, 16 << 20, c.model.seq_len).unwrap();
    let f = ConstraintFile::from_toml(MOE_64L_CONSTRAINTS).unwrap();
    let top = search(&f.space, &c, &w, &f.constraint, 5).unwrap();
    assert_eq!(top, brute_force(&f.space, &c, &w, &f.constraint, 5).unwrap());
    assert!(top.windows(2).all(|p| p[0].estimate.step_time_s <= p[1].estimate.step_time_s));
    let mut csv = Vec::new();
    write_csv(&top, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("rank,config,tp,"));
}

#[test]
fn singleton_and_empty_spaces() {
    let c = cal();
    let w = Workload::new(2048, 4096);
    let one = Space { tp: vec![1], cp: vec![1], ep: vec![8], pp: vec![8], vpp: vec![1], mbs: vec![1] };
    let r = search(&one, &c, &w, &[], 3).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].config, baseline());
    let none = Space { mbs: vec![], ..one };
    assert_eq!(search(&none, &c, &w, &[], 3), Err(TunerError::EmptySpace));
}

fn subset(all: &'static [u32]) -> impl Strategy<Value = Vec<u32>> {
    proptest::sample::subsequence(all, 1..=all.len())
}

fn space() -> impl Strategy<Value = Space> {
    (
        subset(&[1, 2, 4, 8]),
        subset(&[1, 2]),
        subset(&[1, 2, 4, 8, 16]),
        subset(&[1, 2, 4, 8, 16]),
        subset(&[1, 2, 4]),
        subset(&[1, 2, 4, 8]),
    )
        .prop_map(|(tp, cp, ep, pp, vpp, mbs)| Space { tp, cp, ep, pp, vpp, mbs })
        .prop_filter("at most 200 configs", |s| s.grid_size() <= 200)
}

fn perturbed_cal() -> impl Strategy<Value = Calibration> {
    (0.3f64..3.0, 0.3f64..3.0, 20.0f64..120.0).prop_map(|(comp, comm, cap)| {
        let mut c = cal();
        c.cost.layer_compute_s *= comp;
        for t in [&mut c.cost.tp_comm_s, &mut c.cost.ep_comm_s, &mut c.cost.pp_p2p_s] {
            t.0.values_mut().for_each(|v| *v *= comm);
        }
        c.memory.capacity_gb = cap;
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_equals_brute_force(s in space(), c in perturbed_cal(), n in prop::sample::select(vec![16u32, 64, 256, 2048]), k in 1usize..20) {
        let w = Workload::new(n, 4096);
        let cons = [Constraint::FitsMemory];
        prop_assert_eq!(search(&s, &c, &w, &cons, k), brute_force(&s, &c, &w, &cons, k));
    }

    #[test]
    fn accepted_configs_satisfy_identities(s in space(), n in prop::sample::select(vec![16u32, 48, 64, 2048]), gbs in prop::sample::select(vec![64u32, 96, 512, 4096])) {
        let c = cal();
        let w = Workload::new(n, gbs);
        for k in s.enumerate(&c.model, &w) {
            prop_assert_eq!(k.tp * k.cp * k.pp * k.dp, n);
            prop_assert_eq!(k.dp * k.mbs * k.accum, gbs);
            prop_assert_eq!(k.dp % k.ep, 0);
            prop_assert_eq!((c.model.layers / k.pp) % k.vpp, 0);
        }
    }

    #[test]
    fn prune_is_sound_and_distributes_over_union(s in space(), tp in subset(&[1, 2, 4, 8]), max_mbs in 1u32..8, cut in 0usize..200) {
        let c = cal();
        let w = Workload::new(64, 512);
        let all = s.enumerate(&c.model, &w);
        let cons = [Constraint::OneOf(Dim::Tp, tp), Constraint::Range { dim: Dim::Mbs, min: None, max: Some(max_mbs) }];
        let kept = prune(&all, &cons, &c, &w);
        let expect: Vec<ParallelismConfig> = all.iter().filter(|k| cons.iter().all(|x| x.holds(k, &c, &w))).copied().collect();
        prop_assert_eq!(&kept, &expect);
        let cut = cut.min(all.len());
        let (a, b) = all.split_at(cut);
        let mut joined = prune(a, &cons, &c, &w);
        joined.extend(prune(b, &cons, &c, &w));
        prop_assert_eq!(joined, kept);
    }
}

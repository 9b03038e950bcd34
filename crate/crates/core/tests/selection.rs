use ldsmdl::criteria::{aic, bic, count_params, fia, mme, CriterionName};
use ldsmdl::datagen::{narma_generate, preprocess_center_trim, NarmaOrder, NarmaSpec};
use ldsmdl::em::{EmConfig, FitMode};
use ldsmdl::model::simulate;
use ldsmdl::inference::{complete_data_loglik, e_step};
use ldsmdl::selection::{annihilation_search, grid_search, sweep_rows, write_sweep_csv, MdlFit, SelectionConfig};
use ldsmdl::{LdsParams, ModelOrderBounds};
use nalgebra::{DMatrix, DVector};

fn quick(seed: u64) -> SelectionConfig {
    let mut cfg = SelectionConfig::new(EmConfig {
        eps: 1e-3,
        max_iters: 80,
        n_restarts: 4,
        seed,
        mode: FitMode::Latent,
    });
    cfg.fisher = false;
    cfg
}

fn scalar_data(seed: u64) -> ldsmdl::SequenceData {
    let s = |v| DMatrix::from_element(1, 1, v);
    let p = LdsParams::new(s(0.9), s(1.0), s(1.0), s(0.1), DVector::zeros(1), s(1.0)).unwrap();
    simulate(&p, 100, 20, seed).unwrap()
}

#[test]
fn degenerate_bounds_give_single_fit() {
    let data = scalar_data(1);
    let b = ModelOrderBounds::new(2, 2).unwrap();
    let a = annihilation_search(&data, &b, &quick(1)).unwrap();
    assert_eq!(a.chosen_order, 2);
    assert_eq!(a.per_order.len(), 1);
    assert!(!a.stopped_early);
    let g = grid_search(&data, &b, &quick(1), CriterionName::Mdl).unwrap();
    assert_eq!(g.chosen_order, 2);
    assert_eq!(sweep_rows(&g).len(), 1);
}

#[test]
fn scalar_system_selects_a_small_order() {
    let data = scalar_data(2);
    let trace = annihilation_search(&data, &ModelOrderBounds::new(1, 4).unwrap(), &quick(2)).unwrap();
    assert!(trace.chosen_order <= 2, "chose {}", trace.chosen_order);
}

#[test]
fn chosen_order_minimises_description_length() {
    let data = scalar_data(3);
    let mut cfg = quick(3);
    cfg.early_stop = false;
    let trace = annihilation_search(&data, &ModelOrderBounds::new(1, 4).unwrap(), &cfg).unwrap();
    let orders: Vec<usize> = trace.per_order.iter().map(|r| r.order).collect();
    assert_eq!(orders, vec![4, 3, 2, 1]);
    let best = trace.per_order.iter().map(|r| r.dl).fold(f64::INFINITY, f64::min);
    assert_eq!(trace.record(trace.chosen_order).unwrap().dl, best);

    // same fits from the grid driver
    let grid = grid_search(&data, &ModelOrderBounds::new(1, 4).unwrap(), &cfg, CriterionName::Mdl).unwrap();
    assert_eq!(grid.chosen_order, trace.chosen_order);
    let grid_orders: Vec<usize> = grid.per_order.iter().map(|r| r.order).collect();
    assert_eq!(grid_orders, vec![1, 2, 3, 4]);
    for r in &grid.per_order {
        assert_eq!(r.dl, trace.record(r.order).unwrap().dl);
    }
}

#[test]
fn traces_are_byte_identical_per_seed() {
    let data = scalar_data(4);
    let b = ModelOrderBounds::new(1, 3).unwrap();
    let one = grid_search(&data, &b, &quick(4), CriterionName::Bic).unwrap().to_json().unwrap();
    let two = grid_search(&data, &b, &quick(4), CriterionName::Bic).unwrap().to_json().unwrap();
    assert_eq!(one, two);
    let three = annihilation_search(&data, &b, &quick(4)).unwrap().to_json().unwrap();
    let four = annihilation_search(&data, &b, &quick(4)).unwrap().to_json().unwrap();
    assert_eq!(three, four);
}

#[test]
fn sweep_values_reconstruct_from_logliks() {
    let data = scalar_data(5);
    let mut cfg = quick(5);
    cfg.fisher = true;
    let trace = grid_search(&data, &ModelOrderBounds::new(1, 3).unwrap(), &cfg, CriterionName::Aic).unwrap();
    for r in &trace.per_order {
        let ll = r.loglik.unwrap();
        let k = count_params(r.order, 1).n_theta;
        assert_eq!(k, r.n_theta);
        let n = data.len();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(1.0);
        assert!(close(r.score(CriterionName::Aic), aic(ll, k).value));
        assert!(close(r.score(CriterionName::Bic), bic(ll, k, n).value));
        assert!(close(r.score(CriterionName::Fia), fia(ll, k, n, r.fisher_log_det.unwrap()).value));
        assert!(close(r.score(CriterionName::Mme), mme(ll, k, n).value));
        for c in &r.criteria {
            let sum: f64 = c.components.values().sum();
            assert!(close(c.value, sum));
            assert_eq!(c.order, r.order);
        }
    }
    let mut buf = Vec::new();
    write_sweep_csv(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "order");
    assert_eq!(&header[2], "aic");
    for (row, r) in rdr.records().zip(&trace.per_order) {
        let row = row.unwrap();
        let ll: f64 = row[1].parse().unwrap();
        let a: f64 = row[2].parse().unwrap();
        assert_eq!(ll, r.loglik.unwrap());
        assert!((a - aic(ll, r.n_theta).value).abs() <= 1e-10 * a.abs());
        for k in 7..12 {
            let v: f64 = row[k].parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn observable_state_selection_on_narma() {
    let raw = narma_generate(&NarmaSpec::new(NarmaOrder::Ten, 300, 1)).unwrap();
    let data = preprocess_center_trim(&raw, (-0.5, 0.5)).unwrap();
    let mut cfg = quick(1);
    cfg.em.mode = FitMode::ObservableState;
    cfg.fisher = true;
    let trace = grid_search(&data, &ModelOrderBounds::new(1, 4).unwrap(), &cfg, CriterionName::Mdl).unwrap();
    for r in &trace.per_order {
        assert_eq!(r.n, data.len() - 4);
        assert!(r.error.is_none(), "{:?}", r.error);
        let fit = r.fit.as_ref().unwrap();
        assert_eq!(fit.params.c, DMatrix::identity(r.order, r.order));
    }
}

#[test]
fn unfittable_data_is_rejected() {
    let data = ldsmdl::SequenceData::from_scalars(&[1.0]).unwrap();
    assert!(grid_search(&data, &ModelOrderBounds::new(1, 2).unwrap(), &quick(0), CriterionName::Mdl).is_err());
}

#[test]
fn mdl_fit_variants_differ_only_in_the_fit_term() {
    let data = scalar_data(4);
    let bounds = ModelOrderBounds::new(1, 2).unwrap();
    let marginal = grid_search(&data, &bounds, &quick(4), CriterionName::Mdl).unwrap();
    let mut cfg = quick(4);
    cfg.mdl_fit = MdlFit::SmoothedObservation;
    let smoothed = grid_search(&data, &bounds, &cfg, CriterionName::Mdl).unwrap();
    for (m, s) in marginal.per_order.iter().zip(&smoothed.per_order) {
        let fit = m.fit.as_ref().unwrap();
        assert_eq!(fit, s.fit.as_ref().unwrap());
        assert!((m.fit_term.unwrap() - fit.loglik).abs() < 1e-9);
        let (_, post) = e_step(&fit.params, &data).unwrap();
        let obs = complete_data_loglik(&fit.params, &post, &data).unwrap();
        assert!((s.fit_term.unwrap() - obs).abs() < 1e-9);
        let penalty = |r: &ldsmdl::selection::OrderRecord| r.dl + r.fit_term.unwrap();
        assert!((penalty(m) - penalty(s)).abs() < 1e-9);
    }
}

use proptest::prelude::*;
use textcomp_cli::results::{ResultRow, ResultTable};
use textcomp_cli::emit_plot;

fn table_from(points: &[(usize, usize, f64, f64)]) -> ResultTable {
    let names = ["full", "baseline", "full-stn"];
    let xs = [0.0, 0.025, 0.1];
    let mut t = ResultTable::new("sigma");
    for (trial, &(v, x, acc, cer)) in points.iter().enumerate() {
        t.push(ResultRow {
            variant: names[v].to_string(),
            sweep_value: xs[x],
            trial,
            word_acc: acc,
            cer,
        })
        .unwrap();
    }
    t
}

/// `(variant, x, mean, std)` from every `<title>` of the plot.
fn parse_titles(svg: &str) -> Vec<(String, f64, f64, f64)> {
    svg.split("<title>")
        .skip(1)
        .map(|rest| {
            let text = &rest[..rest.find("</title>").unwrap()];
            let (variant, rest) = text.split_once(" @ ").unwrap();
            let (x, rest) = rest.split_once(": ").unwrap();
            let (mean, std) = rest.split_once(" ± ").unwrap();
            (variant.to_string(), x.parse().unwrap(), mean.parse().unwrap(), std.parse().unwrap())
        })
        .collect()
}

fn points() -> impl Strategy<Value = Vec<(usize, usize, f64, f64)>> {
    prop::collection::vec((0..3usize, 0..3usize, 0.0..=1.0f64, 0.0..=2.0f64), 0..40)
}

proptest! {
    #[test]
    fn aggregate_matches_recomputation_from_raw_rows(pts in points()) {
        let t = table_from(&pts);
        for a in t.aggregate() {
            let accs: Vec<f64> = t.rows.iter()
                .filter(|r| r.variant == a.variant && r.sweep_value == a.sweep_value)
                .map(|r| r.word_acc)
                .collect();
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = if accs.len() > 1 {
                accs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            prop_assert_eq!(a.trials, accs.len());
            prop_assert!((a.acc_mean - mean).abs() <= 1e-9);
            prop_assert!((a.acc_std - var.sqrt()).abs() <= 1e-9);
        }
        let total: usize = t.aggregate().iter().map(|a| a.trials).sum();
        prop_assert_eq!(total, pts.len());
    }

    #[test]
    fn csv_round_trip_is_exact(pts in points()) {
        let t = table_from(&pts);
        prop_assert_eq!(ResultTable::from_csv("sigma", &t.to_csv()).unwrap(), t);
    }

    #[test]
    fn plot_titles_match_the_aggregate_to_three_decimals(pts in points()) {
        let t = table_from(&pts);
        let svg = emit_plot(&t);
        prop_assert_eq!(&svg, &emit_plot(&t.clone()));
        let titles = parse_titles(&svg);
        let agg = t.aggregate();
        prop_assert_eq!(titles.len(), agg.len());
        for a in &agg {
            let (_, _, mean, std) = titles.iter()
                .find(|(v, x, _, _)| *v == a.variant && *x == a.sweep_value)
                .expect("every point is plotted");
            prop_assert!((mean - a.acc_mean).abs() <= 5e-4 + 1e-12);
            prop_assert!((std - a.acc_std).abs() <= 5e-4 + 1e-12);
        }
    }
}

#[test]
fn empty_table_plot_is_valid_svg() {
    let svg = emit_plot(&ResultTable::new("sigma"));
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(parse_titles(&svg).is_empty());
    assert!(svg.contains(">sigma</text>") && svg.contains(">word accuracy</text>"));
}

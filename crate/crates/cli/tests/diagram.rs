use kanlab_cli::render_diagram;
use kanlab_core::{init_network, Execution, Matrix, SymbolicFn, SymbolicLock};

fn probe() -> Matrix {
    Matrix::new(5, 2, vec![-1.0, 0.5, -0.5, -0.2, 0.0, 0.9, 0.4, -0.7, 1.0, 0.1]).unwrap()
}

fn opacity(svg: &str, id: &str) -> f64 {
    let start = svg.find(&format!(r#"id="{id}""#)).unwrap();
    let rest = &svg[start..];
    let at = rest.find("opacity=\"").unwrap() + 9;
    rest[at..at + rest[at..].find('"').unwrap()].parse().unwrap()
}

#[test]
fn one_group_per_edge_with_stable_ids() {
    let net = init_network(&[2, 1, 1], 3, 3, 0, 0.1).unwrap();
    let (_, trace) = net.forward(&probe(), Execution::Sequential).unwrap();
    let svg = render_diagram(&net, &trace, 3.0);
    assert_eq!(svg.matches(r#"class="edge""#).count(), 3);
    assert_eq!(svg.matches(r#"class="sparkline""#).count(), 3);
    for id in ["edge-0-0-0", "edge-0-0-1", "edge-1-0-0"] {
        assert!(svg.contains(&format!(r#"id="{id}""#)), "{id}");
    }
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    let wide = init_network(&[3, 2, 2], 3, 3, 0, 0.1).unwrap();
    let x = Matrix::zeros(4, 3);
    let (_, trace) = wide.forward(&x, Execution::Sequential).unwrap();
    let svg = render_diagram(&wide, &trace, 3.0);
    assert_eq!(svg.matches(r#"class="edge""#).count(), 10);
    assert!(svg.contains(r#"id="edge-0-1-2""#));
}

#[test]
fn silent_edge_is_transparent_and_locks_are_labelled() {
    let mut net = init_network(&[2, 1, 1], 3, 3, 0, 0.1).unwrap();
    net.edge_mut(0, 1, 0).unwrap().lock = Some(SymbolicLock::plain(SymbolicFn::Zero));
    net.edge_mut(0, 0, 0).unwrap().lock = Some(SymbolicLock::plain(SymbolicFn::Sin));
    let (_, trace) = net.forward(&probe(), Execution::Sequential).unwrap();
    let svg = render_diagram(&net, &trace, 3.0);
    assert_eq!(opacity(&svg, "edge-0-0-1"), 0.0);
    assert!(opacity(&svg, "edge-0-0-0") > 0.0);
    assert_eq!(svg.matches(r#"class="symbol""#).count(), 2);
    assert!(svg.contains(">sin</text>"));
}

#[test]
fn opacity_ordering_does_not_depend_on_beta() {
    let net = init_network(&[2, 3, 1], 3, 3, 7, 0.5).unwrap();
    let (_, trace) = net.forward(&probe(), Execution::Sequential).unwrap();
    let ids: Vec<String> = net.iter_edges().map(|((l, i, j), _)| format!("edge-{l}-{j}-{i}")).collect();
    let (one, three) = (render_diagram(&net, &trace, 1.0), render_diagram(&net, &trace, 3.0));
    let a: Vec<f64> = ids.iter().map(|id| opacity(&one, id)).collect();
    let b: Vec<f64> = ids.iter().map(|id| opacity(&three, id)).collect();
    for p in 0..ids.len() {
        assert!(b[p] >= a[p]);
        for q in 0..ids.len() {
            if a[p] < a[q] {
                assert!(b[p] <= b[q]);
            }
        }
    }
}

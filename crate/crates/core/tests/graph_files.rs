use std::fs;
use std::path::Path;

use fairgfl_core::graph::{load_graph, partition, true_overlap_matrices, write_partition_dump};
use fairgfl_core::{Error, PartitionSpec, SbmParams};
use proptest::prelude::*;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn three_node_path() {
    let dir = tempfile::tempdir().unwrap();
    let nodes = write(dir.path(), "nodes.txt", "a 1.0 0.0 x\nb 0.0 1.0 y\nc 0.5 0.5 x\n");
    let edges = write(dir.path(), "edges.txt", "a b\nb c\n");
    let (g, report) = load_graph(&nodes, &edges).unwrap();
    assert_eq!(g.num_nodes(), 3);
    assert_eq!(g.feature_dim(), 2);
    assert_eq!(g.num_classes(), 2);
    assert_eq!(g.adjacency().nnz(), 4);
    assert!(g.adjacency().has_edge(2, 1));
    assert_eq!(g.labels(), &[0, 1, 0]);
    assert_eq!(report.unknown_endpoint_edges, 0);
}

#[test]
fn comma_separated_files_and_dropped_edges() {
    let dir = tempfile::tempdir().unwrap();
    let nodes = write(dir.path(), "n.csv", "# id,f1,label\n10,0.1,3\n20,0.2,1\n\n30,0.3,3\n");
    let edges = write(dir.path(), "e.csv", "10,20\n20,20\n20,99\n30,10\n10,30\n");
    let (g, report) = load_graph(&nodes, &edges).unwrap();
    assert_eq!(g.adjacency().num_edges(), 2);
    assert_eq!(report.self_loops, 1);
    assert_eq!(report.unknown_endpoint_edges, 1);
    assert_eq!(g.labels(), &[1, 0, 1]);
}

#[test]
fn ragged_rows_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let nodes = write(dir.path(), "n.txt", "a 1 2 x\nb 1 y\n");
    let edges = write(dir.path(), "e.txt", "");
    match load_graph(&nodes, &edges) {
        Err(Error::Parse { line, path, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(path, nodes);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        load_graph(&dir.path().join("absent"), &edges),
        Err(Error::Io { .. })
    ));
}

#[test]
fn partition_dump_lists_memberships() {
    let g = SbmParams {
        num_blocks: 3,
        nodes_per_block: 20,
        ..SbmParams::default()
    }
    .generate()
    .unwrap();
    let parts = partition(&g, &PartitionSpec { num_clients: 4, ..PartitionSpec::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.txt");
    write_partition_dump(&path, &parts).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let total: usize = parts.iter().map(|p| p.num_nodes()).sum();
    assert_eq!(text.lines().count(), total);
    let first = text.lines().next().unwrap();
    let cols: Vec<usize> = first.split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(cols.len(), 2);
    assert!(parts[cols[0]].node_ids.contains(&cols[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn overlap_matrices_are_ratios(seed in 0u64..1000, n in 0.0f64..0.3) {
        let g = SbmParams { num_blocks: 3, nodes_per_block: 20, seed, ..SbmParams::default() }.generate().unwrap();
        let spec = PartitionSpec { num_clients: 5, overlap_coefficient: n, seed, ..PartitionSpec::default() };
        let parts = partition(&g, &spec).unwrap();
        let (node, link) = true_overlap_matrices(&parts);
        for i in 0..5 {
            prop_assert_eq!(node[[i, i]], 1.0);
            for k in 0..5 {
                prop_assert!((0.0..=1.0).contains(&node[[i, k]]));
                prop_assert!((0.0..=1.0).contains(&link[[i, k]]));
                // |V_i ∩ V_k| is symmetric even though the ratios are not.
                let a = node[[i, k]] * parts[i].num_nodes() as f64;
                let b = node[[k, i]] * parts[k].num_nodes() as f64;
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
        for p in &parts {
            prop_assert!(p.adjacency.is_symmetric());
        }
    }
}

//! C++ source generation for a forest subset.
//!
//! Each tree becomes a static node array plus a leaf table, walked by one
//! shared loop. Arithmetic is single precision. Thresholds are rounded
//! towards negative infinity when narrowed to `float`, which keeps routing
//! identical to the double-precision library for any input that is itself
//! representable as a `float`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::model_size_bytes;
use crate::forest::{Forest, Node, Subset};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_trees: usize,
    pub total_nodes: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub expected_size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedModel {
    pub source_text: String,
    pub manifest: Manifest,
}

/// Largest `f32` not above `t`.
pub fn threshold_to_f32(t: f64) -> f32 {
    let narrowed = t as f32;
    if f64::from(narrowed) > t {
        narrowed.next_down()
    } else {
        narrowed
    }
}

fn float_literal(v: f32) -> String {
    if v.is_finite() {
        let s = format!("{v:?}");
        if s.contains(['.', 'e']) {
            format!("{s}f")
        } else {
            format!("{s}.0f")
        }
    } else if v > 0.0 {
        "std::numeric_limits<float>::infinity()".into()
    } else {
        "-std::numeric_limits<float>::infinity()".into()
    }
}

/// Emit one translation unit defining `void predict(const float* x, float* out)`,
/// which writes the average class vector of the subset's trees to `out`.
pub fn emit_source(forest: &Forest, subset: &Subset) -> Result<EmittedModel> {
    forest.check_subset(subset)?;
    let n_classes = forest.n_classes();
    let manifest = Manifest {
        n_trees: subset.len(),
        total_nodes: forest.node_count(subset),
        n_classes,
        n_features: forest.n_features(),
        expected_size_bytes: model_size_bytes(forest, subset, n_classes)?,
    };

    let mut src = String::new();
    // Writing to a String cannot fail.
    let w = &mut src;
    let _ = writeln!(w, "// Generated forest inference code.");
    let _ = writeln!(
        w,
        "// trees: {}, nodes: {}, classes: {}, features: {}",
        manifest.n_trees, manifest.total_nodes, manifest.n_classes, manifest.n_features
    );
    let _ = writeln!(w, "#include <cstdint>\n#include <limits>\n");
    let _ = writeln!(w, "namespace {{\n");
    let _ = writeln!(w, "constexpr int kNumClasses = {n_classes};");
    let _ = writeln!(w, "constexpr int kNumFeatures = {};", manifest.n_features);
    let _ = writeln!(w, "constexpr int kNumTrees = {};\n", manifest.n_trees);
    let _ = writeln!(
        w,
        "struct Node {{\n    std::int32_t left;\n    std::int32_t right;\n    bool is_leaf;\n    \
         std::int32_t feature;\n    float threshold;\n    std::int32_t leaf;\n}};\n"
    );
    let _ = writeln!(
        w,
        "struct TreeRef {{\n    const Node* nodes;\n    const float (*leaves)[kNumClasses];\n    std::int32_t root;\n}};\n"
    );

    for (pos, &i) in subset.indices().iter().enumerate() {
        let tree = forest.tree(i);
        let _ = writeln!(w, "// tree {i}");
        let _ = writeln!(w, "const Node kTree{pos}Nodes[] = {{");
        let mut leaf_rows = Vec::new();
        for node in tree.nodes() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(
                        w,
                        "    {{{left}, {right}, false, {feature}, {}, -1}},",
                        float_literal(threshold_to_f32(*threshold))
                    );
                }
                Node::Leaf { prediction } => {
                    let _ = writeln!(w, "    {{-1, -1, true, 0, 0.0f, {}}},", leaf_rows.len());
                    leaf_rows.push(prediction);
                }
            }
        }
        let _ = writeln!(w, "}};");
        let _ = writeln!(w, "const float kTree{pos}Leaves[][kNumClasses] = {{");
        for row in leaf_rows {
            let values: Vec<String> = row.iter().map(|&v| float_literal(v as f32)).collect();
            let _ = writeln!(w, "    {{{}}},", values.join(", "));
        }
        let _ = writeln!(w, "}};\n");
    }

    let _ = writeln!(w, "const TreeRef kTrees[kNumTrees] = {{");
    for (pos, &i) in subset.indices().iter().enumerate() {
        let _ = writeln!(w, "    {{kTree{pos}Nodes, kTree{pos}Leaves, {}}},", forest.tree(i).root());
    }
    let _ = writeln!(w, "}};\n");
    let _ = writeln!(w, "}}  // namespace\n");
    let _ = writeln!(
        w,
        "void predict(const float* x, float* out) {{
    for (int c = 0; c < kNumClasses; ++c) out[c] = 0.0f;
    for (int t = 0; t < kNumTrees; ++t) {{
        const TreeRef& tree = kTrees[t];
        std::int32_t i = tree.root;
        while (!tree.nodes[i].is_leaf) {{
            const Node& n = tree.nodes[i];
            i = x[n.feature] <= n.threshold ? n.left : n.right;
        }}
        const float* p = tree.leaves[tree.nodes[i].leaf];
        for (int c = 0; c < kNumClasses; ++c) out[c] += p[c];
    }}
    for (int c = 0; c < kNumClasses; ++c) out[c] /= static_cast<float>(kNumTrees);
}}"
    );

    Ok(EmittedModel {
        source_text: src,
        manifest,
    })
}

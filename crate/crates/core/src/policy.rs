//! Decision-tree and fixed assignment policies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::types::{ArmSet, ContextSchema};

/// Anything that deterministically maps a context to an arm.
pub trait Policy {
    fn assign(&self, x: &[f64]) -> usize;
}

/// Axis-aligned binary decision tree. `left` holds contexts with
/// `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { arm: usize },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    fn assign(&self, x: &[f64]) -> usize {
        match self {
            TreeNode::Leaf { arm } => *arm,
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.assign(x)
                } else {
                    right.assign(x)
                }
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn collect_arms(&self, out: &mut BTreeSet<usize>) {
        match self {
            TreeNode::Leaf { arm } => {
                out.insert(*arm);
            }
            TreeNode::Split { left, right, .. } => {
                left.collect_arms(out);
                right.collect_arms(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePolicy {
    root: TreeNode,
    /// Maximal depth of the class the tree was searched in (>= structural depth).
    max_depth: usize,
}

impl TreePolicy {
    pub fn new(root: TreeNode, max_depth: usize) -> Result<Self> {
        if root.depth() > max_depth {
            return Err(Error::invalid(format!(
                "tree of depth {} exceeds declared maximum {max_depth}",
                root.depth()
            )));
        }
        Ok(TreePolicy { root, max_depth })
    }

    pub fn leaf(arm: usize) -> Self {
        TreePolicy { root: TreeNode::Leaf { arm }, max_depth: 0 }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn structural_depth(&self) -> usize {
        self.root.depth()
    }

    /// Arms appearing on at least one leaf.
    pub fn leaf_arms(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.root.collect_arms(&mut out);
        out
    }

    /// Nested JSON with feature names and arm aliases.
    pub fn to_named_json(&self, schema: &ContextSchema, arms: &ArmSet) -> Value {
        fn node(n: &TreeNode, schema: &ContextSchema, arms: &ArmSet) -> Value {
            match n {
                TreeNode::Leaf { arm } => json!({ "arm": arms.alias(*arm) }),
                TreeNode::Split { feature, threshold, left, right } => json!({
                    "feature": schema.features()[*feature].name,
                    "threshold": threshold,
                    "left": node(left, schema, arms),
                    "right": node(right, schema, arms),
                }),
            }
        }
        json!({ "max_depth": self.max_depth, "tree": node(&self.root, schema, arms) })
    }

    pub fn from_named_json(v: &Value, schema: &ContextSchema, arms: &ArmSet) -> Result<Self> {
        fn node(v: &Value, schema: &ContextSchema, arms: &ArmSet) -> Result<TreeNode> {
            if let Some(alias) = v.get("arm").and_then(Value::as_str) {
                let arm = arms
                    .index_of(alias)
                    .ok_or_else(|| Error::invalid(format!("unknown arm alias `{alias}`")))?;
                return Ok(TreeNode::Leaf { arm });
            }
            let name = v
                .get("feature")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::invalid("tree node needs `arm` or `feature`"))?;
            let feature = schema
                .feature_index(name)
                .ok_or_else(|| Error::invalid(format!("unknown feature `{name}`")))?;
            let threshold = v
                .get("threshold")
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::invalid("split node missing numeric `threshold`"))?;
            let left = node(v.get("left").ok_or_else(|| Error::invalid("split missing `left`"))?, schema, arms)?;
            let right =
                node(v.get("right").ok_or_else(|| Error::invalid("split missing `right`"))?, schema, arms)?;
            Ok(TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) })
        }
        let max_depth = v.get("max_depth").and_then(Value::as_u64).unwrap_or(0) as usize;
        let root = node(v.get("tree").unwrap_or(v), schema, arms)?;
        let max_depth = max_depth.max(root.depth());
        TreePolicy::new(root, max_depth)
    }

    /// Indented text rendering of the tree.
    pub fn render_text(&self, schema: &ContextSchema, arms: &ArmSet) -> String {
        fn walk(n: &TreeNode, schema: &ContextSchema, arms: &ArmSet, indent: usize, out: &mut String) {
            let pad = "  ".repeat(indent);
            match n {
                TreeNode::Leaf { arm } => {
                    out.push_str(&format!("{pad}assign {}\n", arms.alias(*arm)));
                }
                TreeNode::Split { feature, threshold, left, right } => {
                    let name = &schema.features()[*feature].name;
                    out.push_str(&format!("{pad}if {name} <= {threshold}:\n"));
                    walk(left, schema, arms, indent + 1, out);
                    out.push_str(&format!("{pad}else:\n"));
                    walk(right, schema, arms, indent + 1, out);
                }
            }
        }
        let mut out = String::new();
        walk(&self.root, schema, arms, 0, &mut out);
        out
    }
}

impl Policy for TreePolicy {
    fn assign(&self, x: &[f64]) -> usize {
        self.root.assign(x)
    }
}

/// Constant policy: the same arm for every context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPolicy {
    pub arm: usize,
}

impl Policy for FixedPolicy {
    fn assign(&self, _x: &[f64]) -> usize {
        self.arm
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn assign(&self, x: &[f64]) -> usize {
        (**self).assign(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Feature, FeatureKind};

    fn schema() -> ContextSchema {
        ContextSchema::new(
            vec![
                Feature::new("x1", FeatureKind::Real, -100.0, 100.0),
                Feature::new("x2", FeatureKind::Real, -100.0, 100.0),
            ],
            -10.0,
            10.0,
        )
        .unwrap()
    }

    fn arms() -> ArmSet {
        ArmSet::new(vec!["a", "b", "c"]).unwrap()
    }

    fn depth2_tree() -> TreePolicy {
        TreePolicy::new(
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: Box::new(TreeNode::Leaf { arm: 0 }),
                right: Box::new(TreeNode::Split {
                    feature: 1,
                    threshold: -1.0,
                    left: Box::new(TreeNode::Leaf { arm: 1 }),
                    right: Box::new(TreeNode::Leaf { arm: 2 }),
                }),
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn evaluation_is_total_and_boundary_goes_left() {
        let t = depth2_tree();
        assert_eq!(t.assign(&[0.5, 0.0]), 0); // boundary: <= goes left
        assert_eq!(t.assign(&[0.6, -2.0]), 1);
        assert_eq!(t.assign(&[0.6, 0.0]), 2);
        assert_eq!(t.leaf_arms().into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn named_json_round_trip() {
        let t = depth2_tree();
        let v = t.to_named_json(&schema(), &arms());
        let back = TreePolicy::from_named_json(&v, &schema(), &arms()).unwrap();
        assert_eq!(t, back);
        let text = t.render_text(&schema(), &arms());
        assert!(text.contains("if x1 <= 0.5:"));
        assert!(text.contains("assign c"));
    }

    #[test]
    fn depth_cap_enforced() {
        let deep = TreeNode::Split {
            feature: 0,
            threshold: 0.0,
            left: Box::new(TreeNode::Leaf { arm: 0 }),
            right: Box::new(TreeNode::Leaf { arm: 1 }),
        };
        assert!(TreePolicy::new(deep, 0).is_err());
    }
}

//! Groupoids in two guises.
//!
//! [`FiniteGroupoid`] stores objects, arrows, and an explicit partial
//! composition table, and supports exhaustive verification of the axioms,
//! hom-set/vertex-group queries, transitivity, translation identities, and
//! brute-force normalizoids of subgroupoids.
//!
//! [`frame`] holds the numerical counterpart: finite sampled sets of
//! invertible 3x3 maps between body points, with orthogonal and unimodular
//! reductions, intersections, and adapted-frame constructions.

pub mod frame;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

pub type ObjectId = usize;
pub type ArrowId = usize;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GroupoidError {
    #[error("groupoid must have at least one object")]
    EmptyBase,
    #[error("object id {0} out of range")]
    UnknownObject(ObjectId),
    #[error("invalid group action: {0}")]
    InvalidAction(String),
    #[error("axiom violated: {0}")]
    AxiomViolation(String),
    #[error("no arrows between the requested objects")]
    NotConnected,
    #[error("not a subgroupoid: {0}")]
    NotASubgroupoid(String),
    #[error("serialized groupoid is malformed: {0}")]
    MalformedData(String),
}

/// One arrow of a finite groupoid. `src` is where the arrow starts
/// (its source object) and `dst` where it ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrowRecord {
    pub src: ObjectId,
    pub dst: ObjectId,
    pub label: String,
}

/// Finite groupoid with an explicit partial composition table.
///
/// Composition is right-to-left: `compose(eta, xi)` means "apply `xi`
/// first", and is defined exactly when `src(eta) == dst(xi)`.
#[derive(Debug, Clone)]
pub struct FiniteGroupoid {
    objects: Vec<String>,
    arrows: Vec<ArrowRecord>,
    composition: HashMap<(ArrowId, ArrowId), ArrowId>,
    inverse: Vec<ArrowId>,
    unities: Vec<ArrowId>,
}

/// Multiplication table of a finite group; element 0 need not be the
/// identity, which is located by scanning.
#[derive(Debug, Clone)]
pub struct GroupTable {
    pub labels: Vec<String>,
    /// `mul[a][b]` is the product "a after b".
    pub mul: Vec<Vec<usize>>,
}

impl GroupTable {
    pub fn order(&self) -> usize {
        self.labels.len()
    }

    /// Checks closure shape, associativity, two-sided identity, inverses.
    pub fn validate(&self) -> Result<(), GroupoidError> {
        let n = self.order();
        if n == 0 || self.mul.len() != n || self.mul.iter().any(|row| row.len() != n) {
            return Err(GroupoidError::InvalidAction("multiplication table has wrong shape".into()));
        }
        if self.mul.iter().flatten().any(|&v| v >= n) {
            return Err(GroupoidError::InvalidAction("product out of range".into()));
        }
        self.identity()?;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.mul[self.mul[a][b]][c] != self.mul[a][self.mul[b][c]] {
                        return Err(GroupoidError::InvalidAction("multiplication not associative".into()));
                    }
                }
            }
        }
        for a in 0..n {
            self.inverse_of(a)?;
        }
        Ok(())
    }

    pub fn identity(&self) -> Result<usize, GroupoidError> {
        let n = self.order();
        (0..n)
            .find(|&e| (0..n).all(|a| self.mul[e][a] == a && self.mul[a][e] == a))
            .ok_or_else(|| GroupoidError::InvalidAction("no identity element".into()))
    }

    pub fn inverse_of(&self, a: usize) -> Result<usize, GroupoidError> {
        let e = self.identity()?;
        (0..self.order())
            .find(|&b| self.mul[a][b] == e && self.mul[b][a] == e)
            .ok_or_else(|| GroupoidError::InvalidAction(format!("element {a} has no inverse")))
    }

    /// Cyclic group of order `n`.
    pub fn cyclic(n: usize) -> GroupTable {
        let labels = (0..n).map(|k| format!("g{k}")).collect();
        let mul = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        GroupTable { labels, mul }
    }

    /// Full permutation group of `{0, .., n-1}`; n <= 4 keeps this small.
    pub fn symmetric(n: usize) -> GroupTable {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for slot in 0..n {
                    let mut q = p.clone();
                    q.insert(slot, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let elems = perms(n);
        let index: HashMap<Vec<usize>, usize> =
            elems.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let labels = elems
            .iter()
            .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(""))
            .collect();
        let mul = elems
            .iter()
            .map(|a| {
                elems
                    .iter()
                    .map(|b| {
                        // "a after b": apply b, then a.
                        let prod: Vec<usize> = (0..n).map(|x| a[b[x]]).collect();
                        index[&prod]
                    })
                    .collect()
            })
            .collect();
        GroupTable { labels, mul }
    }

    /// The natural action of `symmetric(n)` on `{0, .., n-1}`.
    pub fn natural_action(&self, n: usize) -> Vec<Vec<usize>> {
        // Only valid for tables built by `symmetric(n)`: recover each
        // permutation from the labels.
        self.labels
            .iter()
            .map(|lbl| lbl.bytes().map(|b| (b - b'0') as usize).take(n).collect())
            .collect()
    }

    /// All subgroups, as sorted element sets; brute force over subsets.
    pub fn subgroups(&self) -> Vec<BTreeSet<usize>> {
        let n = self.order();
        assert!(n <= 12, "subset enumeration only meant for small groups");
        let e = self.identity().expect("valid group");
        let mut out = Vec::new();
        for mask in 0u32..(1 << n) {
            if mask & (1 << e) == 0 {
                continue;
            }
            let set: BTreeSet<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let closed = set.iter().all(|&a| {
                set.iter().all(|&b| set.contains(&self.mul[a][b]))
                    && set.contains(&self.inverse_of(a).unwrap())
            });
            if closed {
                out.push(set);
            }
        }
        out
    }

    /// Normalizer of a subgroup: elements conjugating it onto itself.
    pub fn normalizer(&self, sub: &BTreeSet<usize>) -> BTreeSet<usize> {
        let n = self.order();
        (0..n)
            .filter(|&g| {
                let gi = self.inverse_of(g).unwrap();
                let conj: BTreeSet<usize> =
                    sub.iter().map(|&s| self.mul[self.mul[g][s]][gi]).collect();
                conj == *sub
            })
            .collect()
    }
}

/// Serialized form: composition as a list of `[eta, xi, eta . xi]` triples.
#[derive(Debug, Serialize, Deserialize)]
struct GroupoidData {
    objects: Vec<String>,
    arrows: Vec<ArrowRecord>,
    composition: Vec<[ArrowId; 3]>,
    inverse: Vec<ArrowId>,
    unities: Vec<ArrowId>,
}

impl FiniteGroupoid {
    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn arrow_count(&self) -> usize {
        self.arrows.len()
    }

    pub fn object_label(&self, x: ObjectId) -> Option<&str> {
        self.objects.get(x).map(|s| s.as_str())
    }

    pub fn arrow(&self, a: ArrowId) -> Option<&ArrowRecord> {
        self.arrows.get(a)
    }

    pub fn arrows(&self) -> &[ArrowRecord] {
        &self.arrows
    }

    pub fn unity(&self, x: ObjectId) -> Result<ArrowId, GroupoidError> {
        self.unities.get(x).copied().ok_or(GroupoidError::UnknownObject(x))
    }

    pub fn inverse(&self, a: ArrowId) -> Option<ArrowId> {
        self.inverse.get(a).copied()
    }

    /// `eta . xi` (apply `xi` first); `None` when sources/targets mismatch.
    pub fn compose(&self, eta: ArrowId, xi: ArrowId) -> Option<ArrowId> {
        self.composition.get(&(eta, xi)).copied()
    }

    /// All arrow ids, useful as the "whole groupoid" arrow set.
    pub fn all_arrows(&self) -> BTreeSet<ArrowId> {
        (0..self.arrows.len()).collect()
    }

    /// The arrow set of the base subgroupoid: unities only.
    pub fn base_subgroupoid(&self) -> BTreeSet<ArrowId> {
        self.unities.iter().copied().collect()
    }

    /// Pair groupoid: one arrow for every ordered pair of objects.
    pub fn pair(objects: &[&str]) -> Result<FiniteGroupoid, GroupoidError> {
        if objects.is_empty() {
            return Err(GroupoidError::EmptyBase);
        }
        let n = objects.len();
        let mut arrows = Vec::with_capacity(n * n);
        let mut id_of = vec![vec![0; n]; n];
        for src in 0..n {
            for dst in 0..n {
                id_of[src][dst] = arrows.len();
                arrows.push(ArrowRecord {
                    src,
                    dst,
                    label: format!("({}->{})", objects[src], objects[dst]),
                });
            }
        }
        let mut composition = HashMap::new();
        for (eta_id, eta) in arrows.iter().enumerate() {
            for (xi_id, xi) in arrows.iter().enumerate() {
                if eta.src == xi.dst {
                    composition.insert((eta_id, xi_id), id_of[xi.src][eta.dst]);
                }
            }
        }
        let inverse = arrows.iter().map(|a| id_of[a.dst][a.src]).collect();
        let unities = (0..n).map(|x| id_of[x][x]).collect();
        Ok(FiniteGroupoid {
            objects: objects.iter().map(|s| s.to_string()).collect(),
            arrows,
            composition,
            inverse,
            unities,
        })
    }

    /// Action groupoid of a left group action: arrows `(g, x): x -> g.x`,
    /// composed by `(h, g.x) . (g, x) = (hg, x)`.
    ///
    /// `action[g][x]` must be a valid left action: the group identity acts
    /// trivially and `h.(g.x) = (hg).x`.
    pub fn action(
        group: &GroupTable,
        action: &[Vec<usize>],
        objects: &[&str],
    ) -> Result<FiniteGroupoid, GroupoidError> {
        if objects.is_empty() {
            return Err(GroupoidError::EmptyBase);
        }
        group.validate()?;
        let n = objects.len();
        let k = group.order();
        if action.len() != k || action.iter().any(|row| row.len() != n) {
            return Err(GroupoidError::InvalidAction("action table has wrong shape".into()));
        }
        if action.iter().flatten().any(|&x| x >= n) {
            return Err(GroupoidError::InvalidAction("action lands outside the object set".into()));
        }
        let e = group.identity()?;
        if (0..n).any(|x| action[e][x] != x) {
            return Err(GroupoidError::InvalidAction("identity does not act trivially".into()));
        }
        for h in 0..k {
            for g in 0..k {
                for x in 0..n {
                    if action[h][action[g][x]] != action[group.mul[h][g]][x] {
                        return Err(GroupoidError::InvalidAction(
                            "action is not compatible with the group law".into(),
                        ));
                    }
                }
            }
        }

        let mut arrows = Vec::with_capacity(k * n);
        let mut id_of = vec![vec![0; n]; k];
        for g in 0..k {
            for x in 0..n {
                id_of[g][x] = arrows.len();
                arrows.push(ArrowRecord {
                    src: x,
                    dst: action[g][x],
                    label: format!("({},{})", group.labels[g], objects[x]),
                });
            }
        }
        let mut composition = HashMap::new();
        for h in 0..k {
            for g in 0..k {
                for x in 0..n {
                    // (h, g.x) . (g, x) = (hg, x)
                    let eta = id_of[h][action[g][x]];
                    let xi = id_of[g][x];
                    composition.insert((eta, xi), id_of[group.mul[h][g]][x]);
                }
            }
        }
        let mut inverse = vec![0; arrows.len()];
        for g in 0..k {
            let gi = group.inverse_of(g)?;
            for x in 0..n {
                inverse[id_of[g][x]] = id_of[gi][action[g][x]];
            }
        }
        let unities = (0..n).map(|x| id_of[e][x]).collect();
        Ok(FiniteGroupoid {
            objects: objects.iter().map(|s| s.to_string()).collect(),
            arrows,
            composition,
            inverse,
            unities,
        })
    }

    /// Exhaustively checks the groupoid axioms: composition defined exactly
    /// on matching endpoints with correct endpoints, associativity wherever
    /// both sides are defined, unity laws, and two-sided inverses.
    pub fn verify_axioms(&self) -> Result<(), GroupoidError> {
        let n_obj = self.objects.len();
        if n_obj == 0 {
            return Err(GroupoidError::EmptyBase);
        }
        let na = self.arrows.len();
        if self.inverse.len() != na || self.unities.len() != n_obj {
            return Err(GroupoidError::AxiomViolation("table sizes inconsistent".into()));
        }
        for a in &self.arrows {
            if a.src >= n_obj || a.dst >= n_obj {
                return Err(GroupoidError::AxiomViolation("arrow endpoint out of range".into()));
            }
        }

        // Composition domain and endpoint bookkeeping.
        for eta in 0..na {
            for xi in 0..na {
                let defined = self.composition.get(&(eta, xi));
                let should = self.arrows[eta].src == self.arrows[xi].dst;
                match (defined, should) {
                    (Some(&res), true) => {
                        if res >= na {
                            return Err(GroupoidError::AxiomViolation("composite out of range".into()));
                        }
                        if self.arrows[res].src != self.arrows[xi].src
                            || self.arrows[res].dst != self.arrows[eta].dst
                        {
                            return Err(GroupoidError::AxiomViolation(format!(
                                "composite of {eta} and {xi} has wrong endpoints"
                            )));
                        }
                    }
                    (None, true) => {
                        return Err(GroupoidError::AxiomViolation(format!(
                            "composable pair ({eta}, {xi}) missing from the table"
                        )))
                    }
                    (Some(_), false) => {
                        return Err(GroupoidError::AxiomViolation(format!(
                            "non-composable pair ({eta}, {xi}) present in the table"
                        )))
                    }
                    (None, false) => {}
                }
            }
        }

        // Associativity.
        for zeta in 0..na {
            for eta in 0..na {
                if let Some(&ze) = self.composition.get(&(zeta, eta)) {
                    for xi in 0..na {
                        if let Some(&ex) = self.composition.get(&(eta, xi)) {
                            let lhs = self.composition.get(&(ze, xi));
                            let rhs = self.composition.get(&(zeta, ex));
                            if lhs != rhs || lhs.is_none() {
                                return Err(GroupoidError::AxiomViolation(format!(
                                    "associativity fails on ({zeta}, {eta}, {xi})"
                                )));
                            }
                        }
                    }
                }
            }
        }

        // Unity laws.
        for (x, &u) in self.unities.iter().enumerate() {
            if u >= na || self.arrows[u].src != x || self.arrows[u].dst != x {
                return Err(GroupoidError::AxiomViolation(format!("unity of object {x} is not a loop")));
            }
        }
        for a in 0..na {
            let u_dst = self.unities[self.arrows[a].dst];
            let u_src = self.unities[self.arrows[a].src];
            if self.composition.get(&(u_dst, a)) != Some(&a)
                || self.composition.get(&(a, u_src)) != Some(&a)
            {
                return Err(GroupoidError::AxiomViolation(format!("unity laws fail on arrow {a}")));
            }
        }

        // Inverses.
        for a in 0..na {
            let inv = self.inverse[a];
            if inv >= na
                || self.arrows[inv].src != self.arrows[a].dst
                || self.arrows[inv].dst != self.arrows[a].src
            {
                return Err(GroupoidError::AxiomViolation(format!("inverse of {a} has wrong endpoints")));
            }
            let u_src = self.unities[self.arrows[a].src];
            let u_dst = self.unities[self.arrows[a].dst];
            if self.composition.get(&(inv, a)) != Some(&u_src)
                || self.composition.get(&(a, inv)) != Some(&u_dst)
            {
                return Err(GroupoidError::AxiomViolation(format!("inverse laws fail on arrow {a}")));
            }
        }
        Ok(())
    }

    /// Arrows from `x` to `y`.
    pub fn hom_set(&self, x: ObjectId, y: ObjectId) -> Result<Vec<ArrowId>, GroupoidError> {
        if x >= self.objects.len() {
            return Err(GroupoidError::UnknownObject(x));
        }
        if y >= self.objects.len() {
            return Err(GroupoidError::UnknownObject(y));
        }
        Ok((0..self.arrows.len())
            .filter(|&a| self.arrows[a].src == x && self.arrows[a].dst == y)
            .collect())
    }

    /// Loops at `x`; a group under composition.
    pub fn vertex_group(&self, x: ObjectId) -> Result<Vec<ArrowId>, GroupoidError> {
        self.hom_set(x, x)
    }

    /// Every hom set non-empty.
    pub fn is_transitive(&self) -> bool {
        let n = self.objects.len();
        (0..n).all(|x| (0..n).all(|y| !self.hom_set(x, y).unwrap().is_empty()))
    }

    /// Translation identities on a connected triple: for any fixed
    /// `g: y -> z` and `f: x -> y`,
    ///   hom(x, z) = g . hom(x, y)  and  hom(x, z) = hom(y, z) . f,
    /// and vertex groups at `x` and `y` are conjugate through any `x -> y`.
    pub fn check_translation_relation(
        &self,
        x: ObjectId,
        y: ObjectId,
        z: ObjectId,
    ) -> Result<bool, GroupoidError> {
        let hom_xy = self.hom_set(x, y)?;
        let hom_yz = self.hom_set(y, z)?;
        let hom_xz: BTreeSet<ArrowId> = self.hom_set(x, z)?.into_iter().collect();
        if hom_xy.is_empty() || hom_yz.is_empty() {
            return Err(GroupoidError::NotConnected);
        }
        for &g in &hom_yz {
            let translated: BTreeSet<ArrowId> = hom_xy
                .iter()
                .map(|&f| self.compose(g, f).expect("composable by construction"))
                .collect();
            if translated != hom_xz {
                return Ok(false);
            }
        }
        for &f in &hom_xy {
            let translated: BTreeSet<ArrowId> = hom_yz
                .iter()
                .map(|&g| self.compose(g, f).expect("composable by construction"))
                .collect();
            if translated != hom_xz {
                return Ok(false);
            }
        }
        // Vertex-group conjugacy through every arrow x -> y.
        let vx: Vec<ArrowId> = self.vertex_group(x)?;
        let vy: BTreeSet<ArrowId> = self.vertex_group(y)?.into_iter().collect();
        for &f in &hom_xy {
            let fi = self.inverse[f];
            let conj: BTreeSet<ArrowId> = vx
                .iter()
                .map(|&s| {
                    let fs = self.compose(f, s).expect("composable");
                    self.compose(fs, fi).expect("composable")
                })
                .collect();
            if conj != vy {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Checks that `sub` is a subgroupoid over the same base: contains every
    /// unity, and is closed under composition and inverse.
    pub fn verify_subgroupoid(&self, sub: &BTreeSet<ArrowId>) -> Result<(), GroupoidError> {
        for &a in sub {
            if a >= self.arrows.len() {
                return Err(GroupoidError::NotASubgroupoid(format!("arrow {a} out of range")));
            }
        }
        for (x, &u) in self.unities.iter().enumerate() {
            if !sub.contains(&u) {
                return Err(GroupoidError::NotASubgroupoid(format!("missing unity of object {x}")));
            }
        }
        for &a in sub {
            if !sub.contains(&self.inverse[a]) {
                return Err(GroupoidError::NotASubgroupoid(format!("missing inverse of arrow {a}")));
            }
            for &b in sub {
                if let Some(&c) = self.composition.get(&(a, b)) {
                    if !sub.contains(&c) {
                        return Err(GroupoidError::NotASubgroupoid(format!(
                            "not closed: {a} . {b} = {c} missing"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Normalizoid of a subgroupoid: all arrows `g: x -> y` whose
    /// conjugation maps the sub vertex group at `x` onto the one at `y`.
    /// Verifies the subgroupoid property first.
    pub fn normalizoid(&self, sub: &BTreeSet<ArrowId>) -> Result<BTreeSet<ArrowId>, GroupoidError> {
        self.verify_subgroupoid(sub)?;
        // Sub vertex groups per object.
        let n_obj = self.objects.len();
        let mut sub_vertex: Vec<BTreeSet<ArrowId>> = vec![BTreeSet::new(); n_obj];
        for &a in sub {
            let rec = &self.arrows[a];
            if rec.src == rec.dst {
                sub_vertex[rec.src].insert(a);
            }
        }
        let mut out = BTreeSet::new();
        for g in 0..self.arrows.len() {
            let x = self.arrows[g].src;
            let y = self.arrows[g].dst;
            let gi = self.inverse[g];
            let conj: BTreeSet<ArrowId> = sub_vertex[x]
                .iter()
                .map(|&s| {
                    let gs = self.compose(g, s).expect("loop at src composes");
                    self.compose(gs, gi).expect("result loops at dst")
                })
                .collect();
            if conj == sub_vertex[y] {
                out.insert(g);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let mut composition: Vec<[ArrowId; 3]> = self
            .composition
            .iter()
            .map(|(&(a, b), &c)| [a, b, c])
            .collect();
        composition.sort_unstable();
        let data = GroupoidData {
            objects: self.objects.clone(),
            arrows: self.arrows.clone(),
            composition,
            inverse: self.inverse.clone(),
            unities: self.unities.clone(),
        };
        serde_json::to_string_pretty(&data).expect("plain data serializes")
    }

    /// Parses and verifies the axioms before returning.
    pub fn from_json(text: &str) -> Result<FiniteGroupoid, GroupoidError> {
        let data: GroupoidData =
            serde_json::from_str(text).map_err(|e| GroupoidError::MalformedData(e.to_string()))?;
        let mut composition = HashMap::new();
        for [a, b, c] in data.composition {
            if composition.insert((a, b), c).is_some() {
                return Err(GroupoidError::MalformedData(format!(
                    "duplicate composition entry ({a}, {b})"
                )));
            }
        }
        let g = FiniteGroupoid {
            objects: data.objects,
            arrows: data.arrows,
            composition,
            inverse: data.inverse,
            unities: data.unities,
        };
        g.verify_axioms()?;
        Ok(g)
    }

    /// Vertex group of `sub` at `x`, as a set of arrow ids.
    pub fn sub_vertex_group(&self, sub: &BTreeSet<ArrowId>, x: ObjectId) -> Vec<ArrowId> {
        sub.iter()
            .copied()
            .filter(|&a| self.arrows[a].src == x && self.arrows[a].dst == x)
            .collect()
    }

    /// Restriction map used by tests: labels of an arrow set, sorted.
    pub fn labels_of(&self, set: &BTreeSet<ArrowId>) -> BTreeMap<ArrowId, String> {
        set.iter().map(|&a| (a, self.arrows[a].label.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_groupoid_axioms_and_transitivity() {
        for n in 1..=4 {
            let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let g = FiniteGroupoid::pair(&refs).unwrap();
            g.verify_axioms().unwrap();
            assert!(g.is_transitive());
            assert_eq!(g.arrow_count(), n * n);
        }
    }

    #[test]
    fn empty_base_rejected() {
        assert!(matches!(FiniteGroupoid::pair(&[]), Err(GroupoidError::EmptyBase)));
    }

    #[test]
    fn action_groupoid_of_a_swap() {
        let z2 = GroupTable::cyclic(2);
        let action = vec![vec![0, 1], vec![1, 0]];
        let g = FiniteGroupoid::action(&z2, &action, &["a", "b"]).unwrap();
        g.verify_axioms().unwrap();
        assert!(g.is_transitive());
        assert_eq!(g.arrow_count(), 4);
        // The swap arrow at "a" inverts to the swap arrow at "b".
        let swaps = g.hom_set(0, 1).unwrap();
        assert_eq!(swaps.len(), 1);
        let back = g.inverse(swaps[0]).unwrap();
        assert_eq!(g.arrow(back).unwrap().src, 1);
        assert_eq!(g.arrow(back).unwrap().dst, 0);
    }

    #[test]
    fn trivial_action_groupoid_is_disconnected_union_of_groups() {
        let z3 = GroupTable::cyclic(3);
        let action = vec![vec![0, 1]; 3];
        let g = FiniteGroupoid::action(&z3, &action, &["a", "b"]).unwrap();
        g.verify_axioms().unwrap();
        assert!(!g.is_transitive());
        assert_eq!(g.vertex_group(0).unwrap().len(), 3);
        assert!(g.hom_set(0, 1).unwrap().is_empty());
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let z2 = GroupTable::cyclic(2);
        // Non-identity action of the identity element.
        let bad = vec![vec![1, 0], vec![0, 1]];
        assert!(matches!(
            FiniteGroupoid::action(&z2, &bad, &["a", "b"]),
            Err(GroupoidError::InvalidAction(_))
        ));
        // Incompatible with the group law: the generator squares to the
        // identity but its action does not.
        let z4 = GroupTable::cyclic(4);
        let bad2 = vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1], vec![0, 2, 1]];
        assert!(matches!(
            FiniteGroupoid::action(&z4, &bad2, &["a", "b", "c"]),
            Err(GroupoidError::InvalidAction(_))
        ));
    }

    #[test]
    fn translation_relation_on_pair_groupoid() {
        let g = FiniteGroupoid::pair(&["x", "y", "z"]).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    assert!(g.check_translation_relation(x, y, z).unwrap());
                }
            }
        }
    }

    #[test]
    fn s3_one_object_normalizoids_match_group_normalizers() {
        let s3 = GroupTable::symmetric(3);
        let action = vec![vec![0]; 6];
        let g = FiniteGroupoid::action(&s3, &action, &["pt"]).unwrap();
        g.verify_axioms().unwrap();
        let subs = s3.subgroups();
        assert_eq!(subs.len(), 6);
        for sub in &subs {
            // Arrow ids equal group element ids for the one-point action.
            let sub_arrows: BTreeSet<ArrowId> = sub.iter().copied().collect();
            let normalizoid = g.normalizoid(&sub_arrows).unwrap();
            let normalizer: BTreeSet<ArrowId> = s3.normalizer(sub).into_iter().collect();
            assert_eq!(normalizoid, normalizer);
        }
        // The two-element subgroups have normalizer of order 2.
        let two: Vec<_> = subs.iter().filter(|s| s.len() == 2).collect();
        assert_eq!(two.len(), 3);
        for sub in two {
            assert_eq!(s3.normalizer(sub).len(), 2);
        }
    }

    #[test]
    fn normalizoid_of_base_subgroupoid_is_everything() {
        let g = FiniteGroupoid::pair(&["x", "y", "z"]).unwrap();
        let base = g.base_subgroupoid();
        let n = g.normalizoid(&base).unwrap();
        assert_eq!(n, g.all_arrows());
    }

    #[test]
    fn normalizoid_rejects_non_subgroupoids() {
        let g = FiniteGroupoid::pair(&["x", "y"]).unwrap();
        // An arrow set missing unities.
        let bad: BTreeSet<ArrowId> = g.hom_set(0, 1).unwrap().into_iter().collect();
        assert!(matches!(g.normalizoid(&bad), Err(GroupoidError::NotASubgroupoid(_))));
    }

    #[test]
    fn json_round_trip_preserves_structure() {
        let s3 = GroupTable::symmetric(3);
        let action = s3.natural_action(3);
        let g = FiniteGroupoid::action(&s3, &action, &["a", "b", "c"]).unwrap();
        let text = g.to_json();
        let back = FiniteGroupoid::from_json(&text).unwrap();
        assert_eq!(back.arrow_count(), g.arrow_count());
        assert_eq!(back.object_count(), g.object_count());
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(back.hom_set(x, y).unwrap(), g.hom_set(x, y).unwrap());
            }
        }
        // Corrupted table fails verification on load.
        let mut data: serde_json::Value = serde_json::from_str(&text).unwrap();
        data["inverse"][0] = serde_json::json!(1);
        assert!(FiniteGroupoid::from_json(&data.to_string()).is_err());
    }
}

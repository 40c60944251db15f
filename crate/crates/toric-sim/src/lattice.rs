//! Construction and validation of square and randomized toric codes.
//!
//! Geometry conventions. Spins live on the edges of an `L x L` square lattice
//! with periodic boundaries. Unit cell `c = y*L + x` owns two edges: the
//! horizontal edge from vertex `(x, y)` to `(x+1, y)` with spin index `2c`,
//! and the vertical edge from `(x, y)` to `(x, y+1)` with spin index `2c + 1`.
//! Plaquette `p = y*L + x` is the face with lower-left vertex `(x, y)`
//! (position `(x+0.5, y+0.5)`); star `s = y*L + x` sits on vertex `(x, y)`.
//!
//! Logical strings: `X1` runs vertically over horizontal edges (column 0),
//! `Z1` horizontally over horizontal edges (row 0), `X2` horizontally over
//! vertical edges (row 0), `Z2` vertically over vertical edges (column 0).
//!
//! Randomized codes remove every second vertical edge (the defect pattern),
//! then resolve each defect either into one 6-body plaquette and two 3-body
//! stars (probability `p_mix`) or into two 3-body plaquettes and one 6-body
//! star. The surviving spins are re-indexed compactly. `X2`/`Z2` detour
//! around each defect on their row/column with a fixed zig-zag (upward for
//! `X2`, rightward for `Z2`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Square,
    Random,
}

/// Specification of a code lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub l: usize,
    pub kind: LatticeKind,
    /// Probability of resolving a defect into a 6-body plaquette. Ignored for
    /// square lattices.
    pub p_mix: f64,
    pub seed: u64,
}

impl LatticeSpec {
    pub fn square(l: usize) -> Self {
        LatticeSpec {
            l,
            kind: LatticeKind::Square,
            p_mix: 0.0,
            seed: 0,
        }
    }

    pub fn random(l: usize, p_mix: f64, seed: u64) -> Self {
        LatticeSpec {
            l,
            kind: LatticeKind::Random,
            p_mix,
            seed,
        }
    }

    pub fn build(&self) -> Result<StabilizerCode> {
        match self.kind {
            LatticeKind::Square => build_square(self.l),
            LatticeKind::Random => build_random(self),
        }
    }
}

/// One stabilizer operator: its spin support and a 2D position in lattice
/// units (used for walk spreading and plotting only; decoding uses graph
/// distances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stabilizer {
    pub support: Vec<usize>,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logicals {
    pub x1: Vec<usize>,
    pub z1: Vec<usize>,
    pub x2: Vec<usize>,
    pub z2: Vec<usize>,
}

/// A toric stabilizer code: spins, plaquette/star supports with positions,
/// logical operator supports and incidence maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerCode {
    pub l: usize,
    pub kind: LatticeKind,
    pub p_mix: f64,
    pub seed: u64,
    pub num_spins: usize,
    pub plaquettes: Vec<Stabilizer>,
    pub stars: Vec<Stabilizer>,
    pub spin_to_plaquettes: Vec<[usize; 2]>,
    pub spin_to_stars: Vec<[usize; 2]>,
    pub logicals: Logicals,
}

fn h_edge(l: usize, x: usize, y: usize) -> usize {
    2 * (y * l + x)
}

fn v_edge(l: usize, x: usize, y: usize) -> usize {
    2 * (y * l + x) + 1
}

/// Build the square toric code with `2 L^2` spins, `L^2` plaquettes and `L^2`
/// stars of size 4 each.
pub fn build_square(l: usize) -> Result<StabilizerCode> {
    if l < 2 {
        return Err(Error::InvalidSize(l, "L must be at least 2"));
    }
    let mut plaquettes = Vec::with_capacity(l * l);
    let mut stars = Vec::with_capacity(l * l);
    for y in 0..l {
        for x in 0..l {
            let xr = (x + 1) % l;
            let yu = (y + 1) % l;
            let xl = (x + l - 1) % l;
            let yd = (y + l - 1) % l;
            plaquettes.push(Stabilizer {
                support: sorted(vec![
                    h_edge(l, x, y),
                    h_edge(l, x, yu),
                    v_edge(l, x, y),
                    v_edge(l, xr, y),
                ]),
                position: [x as f64 + 0.5, y as f64 + 0.5],
            });
            stars.push(Stabilizer {
                support: sorted(vec![
                    h_edge(l, x, y),
                    h_edge(l, xl, y),
                    v_edge(l, x, y),
                    v_edge(l, x, yd),
                ]),
                position: [x as f64, y as f64],
            });
        }
    }
    let logicals = Logicals {
        x1: (0..l).map(|y| h_edge(l, 0, y)).collect(),
        z1: (0..l).map(|x| h_edge(l, x, 0)).collect(),
        x2: (0..l).map(|x| v_edge(l, x, 0)).collect(),
        z2: (0..l).map(|y| v_edge(l, 0, y)).collect(),
    };
    finish_code(
        LatticeSpec::square(l),
        2 * l * l,
        plaquettes,
        stars,
        logicals,
    )
}

/// Spin indices (in the square code's indexing) of the `L^2 / 2` defect
/// positions: vertical edge `(x, y)` is a defect iff `x ≡ y (mod 2)`.
pub fn defect_pattern(l: usize) -> Result<Vec<usize>> {
    if l < 2 || l % 2 != 0 {
        return Err(Error::InvalidSize(l, "L must be even"));
    }
    let mut defects = Vec::with_capacity(l * l / 2);
    for y in 0..l {
        for x in 0..l {
            if x % 2 == y % 2 {
                defects.push(v_edge(l, x, y));
            }
        }
    }
    Ok(defects)
}

/// Build a randomized code: for each defect, with probability `p_mix` merge
/// the two adjacent plaquettes into a 6-body plaquette (restricting the two
/// stars to 3-body), otherwise the dual resolution.
pub fn build_random(spec: &LatticeSpec) -> Result<StabilizerCode> {
    let l = spec.l;
    if l < 2 || l % 2 != 0 {
        return Err(Error::InvalidSize(l, "L must be even"));
    }
    if !(0.0..=1.0).contains(&spec.p_mix) {
        return Err(Error::invalid_parameter(
            "p_mix",
            format!("{} not in [0, 1]", spec.p_mix),
        ));
    }
    let mut rng = rng::stream(spec.seed, 0);
    let square = build_square(l)?;
    let mut plaq: Vec<Option<Stabilizer>> = square.plaquettes.into_iter().map(Some).collect();
    let mut star: Vec<Option<Stabilizer>> = square.stars.into_iter().map(Some).collect();
    // merged_plaq_at[p] holds a merged stabilizer keyed by its lowest
    // constituent id, so emission order stays close to the original layout
    let mut merged_plaq_at: Vec<Option<Stabilizer>> = vec![None; l * l];
    let mut merged_star_at: Vec<Option<Stabilizer>> = vec![None; l * l];
    let mut is_defect = vec![false; 2 * l * l];

    for &d in defect_pattern(l)?.iter() {
        is_defect[d] = true;
        let cell = (d - 1) / 2;
        let (x, y) = (cell % l, cell / l);
        let p_right = y * l + x;
        let p_left = y * l + (x + l - 1) % l;
        let s_bot = y * l + x;
        let s_top = ((y + 1) % l) * l + x;
        let merge_plaquettes = rng.gen::<f64>() < spec.p_mix;
        if merge_plaquettes {
            let a = plaq[p_left].take().expect("plaquette consumed twice");
            let b = plaq[p_right].take().expect("plaquette consumed twice");
            merged_plaq_at[p_left.min(p_right)] = Some(merge(l, &a, &b, d));
            restrict(star[s_bot].as_mut().unwrap(), d);
            restrict(star[s_top].as_mut().unwrap(), d);
        } else {
            let a = star[s_bot].take().expect("star consumed twice");
            let b = star[s_top].take().expect("star consumed twice");
            merged_star_at[s_bot.min(s_top)] = Some(merge(l, &a, &b, d));
            restrict(plaq[p_left].as_mut().unwrap(), d);
            restrict(plaq[p_right].as_mut().unwrap(), d);
        }
    }

    let plaquettes = collect_stabilizers(plaq, merged_plaq_at);
    let stars = collect_stabilizers(star, merged_star_at);

    // Zig-zag logicals: X1/Z1 touch only horizontal edges and are unchanged;
    // X2 detours upward around defects in row 0, Z2 rightward in column 0.
    let mut x2 = Vec::new();
    for x in 0..l {
        if x % 2 == 0 {
            x2.extend_from_slice(&[
                h_edge(l, (x + l - 1) % l, 1),
                v_edge(l, x, 1),
                h_edge(l, x, 1),
            ]);
        } else {
            x2.push(v_edge(l, x, 0));
        }
    }
    let mut z2 = Vec::new();
    for y in 0..l {
        if y % 2 == 0 {
            z2.extend_from_slice(&[
                h_edge(l, 0, y),
                v_edge(l, 1, y),
                h_edge(l, 0, (y + 1) % l),
            ]);
        } else {
            z2.push(v_edge(l, 0, y));
        }
    }
    let logicals = Logicals {
        x1: (0..l).map(|y| h_edge(l, 0, y)).collect(),
        z1: (0..l).map(|x| h_edge(l, x, 0)).collect(),
        x2: sorted(x2),
        z2: sorted(z2),
    };

    // Compact re-indexing over surviving spins.
    let mut new_index = vec![usize::MAX; 2 * l * l];
    let mut next = 0;
    for (old, &dead) in is_defect.iter().enumerate() {
        if !dead {
            new_index[old] = next;
            next += 1;
        }
    }
    let remap_stab = |stabs: Vec<Stabilizer>| {
        stabs
            .into_iter()
            .map(|s| Stabilizer {
                support: s.support.iter().map(|&i| new_index[i]).collect(),
                position: s.position,
            })
            .collect::<Vec<_>>()
    };
    let remap_log = |v: &[usize]| v.iter().map(|&i| new_index[i]).collect::<Vec<_>>();

    finish_code(
        *spec,
        next,
        remap_stab(plaquettes),
        remap_stab(stars),
        Logicals {
            x1: remap_log(&logicals.x1),
            z1: remap_log(&logicals.z1),
            x2: remap_log(&logicals.x2),
            z2: remap_log(&logicals.z2),
        },
    )
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn restrict(s: &mut Stabilizer, spin: usize) {
    s.support.retain(|&i| i != spin);
}

/// Merge two stabilizers sharing exactly the defect spin; the position is the
/// minimal-image centroid of the two constituent positions on the torus.
fn merge(l: usize, a: &Stabilizer, b: &Stabilizer, defect: usize) -> Stabilizer {
    let mut support: Vec<usize> = a
        .support
        .iter()
        .chain(b.support.iter())
        .copied()
        .filter(|&i| i != defect)
        .collect();
    support.sort_unstable();
    support.dedup();
    let lf = l as f64;
    let wrap = |d: f64| {
        let mut d = d;
        if d > lf / 2.0 {
            d -= lf;
        }
        if d < -lf / 2.0 {
            d += lf;
        }
        d
    };
    let cx = (a.position[0] + wrap(b.position[0] - a.position[0]) / 2.0).rem_euclid(lf);
    let cy = (a.position[1] + wrap(b.position[1] - a.position[1]) / 2.0).rem_euclid(lf);
    Stabilizer {
        support,
        position: [cx, cy],
    }
}

fn collect_stabilizers(
    originals: Vec<Option<Stabilizer>>,
    merged: Vec<Option<Stabilizer>>,
) -> Vec<Stabilizer> {
    let mut out = Vec::new();
    for (orig, merg) in originals.into_iter().zip(merged) {
        if let Some(m) = merg {
            out.push(m);
        }
        if let Some(o) = orig {
            out.push(o);
        }
    }
    out
}

fn finish_code(
    spec: LatticeSpec,
    num_spins: usize,
    plaquettes: Vec<Stabilizer>,
    stars: Vec<Stabilizer>,
    logicals: Logicals,
) -> Result<StabilizerCode> {
    let spin_to_plaquettes = incidence(num_spins, &plaquettes)?;
    let spin_to_stars = incidence(num_spins, &stars)?;
    Ok(StabilizerCode {
        l: spec.l,
        kind: spec.kind,
        p_mix: spec.p_mix,
        seed: spec.seed,
        num_spins,
        plaquettes,
        stars,
        spin_to_plaquettes,
        spin_to_stars,
        logicals,
    })
}

fn incidence(num_spins: usize, stabs: &[Stabilizer]) -> Result<Vec<[usize; 2]>> {
    let mut map = vec![(usize::MAX, usize::MAX); num_spins];
    for (id, s) in stabs.iter().enumerate() {
        for &spin in &s.support {
            let e = &mut map[spin];
            if e.0 == usize::MAX {
                e.0 = id;
            } else if e.1 == usize::MAX {
                e.1 = id;
            } else {
                return Err(Error::invalid_parameter(
                    "stabilizers",
                    format!("spin {spin} appears in more than 2 stabilizers"),
                ));
            }
        }
    }
    map.iter()
        .enumerate()
        .map(|(spin, &(a, b))| {
            if b == usize::MAX {
                Err(Error::invalid_parameter(
                    "stabilizers",
                    format!("spin {spin} appears in fewer than 2 stabilizers"),
                ))
            } else {
                Ok([a, b])
            }
        })
        .collect()
}

/// Exchange plaquettes and stars (and the X/Z logicals). An involution.
pub fn dual(code: &StabilizerCode) -> StabilizerCode {
    StabilizerCode {
        l: code.l,
        kind: code.kind,
        p_mix: code.p_mix,
        seed: code.seed,
        num_spins: code.num_spins,
        plaquettes: code.stars.clone(),
        stars: code.plaquettes.clone(),
        spin_to_plaquettes: code.spin_to_stars.clone(),
        spin_to_stars: code.spin_to_plaquettes.clone(),
        logicals: Logicals {
            x1: code.logicals.z1.clone(),
            z1: code.logicals.x1.clone(),
            x2: code.logicals.z2.clone(),
            z2: code.logicals.x2.clone(),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    /// Offending indices (spins, stabilizer ids, or logical pair labels).
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn overlap_parity(a: &[usize], b: &[usize]) -> usize {
    // supports are sorted
    let mut i = 0;
    let mut j = 0;
    let mut count = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Check all structural invariants of a code and report per-check results
/// with offending indices.
pub fn validate(code: &StabilizerCode) -> ValidationReport {
    let mut checks = Vec::new();

    // Every spin in exactly 2 plaquettes and 2 stars.
    for (name, stabs) in [("spin_in_two_plaquettes", &code.plaquettes), ("spin_in_two_stars", &code.stars)] {
        let mut count = vec![0usize; code.num_spins];
        for s in stabs.iter() {
            for &spin in &s.support {
                count[spin] += 1;
            }
        }
        let failures: Vec<String> = count
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 2)
            .map(|(spin, &c)| format!("spin {spin} in {c}"))
            .collect();
        checks.push(CheckResult {
            name,
            pass: failures.is_empty(),
            failures,
        });
    }

    // Plaquette-star commutation: every overlap even.
    let mut failures = Vec::new();
    for (pid, p) in code.plaquettes.iter().enumerate() {
        for (sid, s) in code.stars.iter().enumerate() {
            if overlap_parity(&p.support, &s.support) % 2 != 0 {
                failures.push(format!("plaquette {pid} / star {sid}"));
            }
        }
    }
    checks.push(CheckResult {
        name: "plaquette_star_commutation",
        pass: failures.is_empty(),
        failures,
    });

    // Logical anticommutation pattern and commutation with stabilizers.
    let lg = &code.logicals;
    let xs = [&lg.x1, &lg.x2];
    let zs = [&lg.z1, &lg.z2];
    let mut failures = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        for (j, z) in zs.iter().enumerate() {
            let odd = overlap_parity(x, z) % 2 == 1;
            if odd != (i == j) {
                failures.push(format!("X{} / Z{}", i + 1, j + 1));
            }
        }
    }
    checks.push(CheckResult {
        name: "logical_anticommutation",
        pass: failures.is_empty(),
        failures,
    });

    let mut failures = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        for (pid, p) in code.plaquettes.iter().enumerate() {
            if overlap_parity(x, &p.support) % 2 != 0 {
                failures.push(format!("X{} / plaquette {pid}", i + 1));
            }
        }
    }
    for (i, z) in zs.iter().enumerate() {
        for (sid, s) in code.stars.iter().enumerate() {
            if overlap_parity(z, &s.support) % 2 != 0 {
                failures.push(format!("Z{} / star {sid}", i + 1));
            }
        }
    }
    checks.push(CheckResult {
        name: "logicals_commute_with_stabilizers",
        pass: failures.is_empty(),
        failures,
    });

    // Counting invariants per lattice kind.
    let l = code.l;
    let (spins_ok, sizes_ok) = match code.kind {
        LatticeKind::Square => (
            code.num_spins == 2 * l * l
                && code.plaquettes.len() == l * l
                && code.stars.len() == l * l,
            code.plaquettes
                .iter()
                .chain(code.stars.iter())
                .all(|s| s.support.len() == 4),
        ),
        LatticeKind::Random => (
            code.num_spins == 3 * l * l / 2
                && code.plaquettes.len() + code.stars.len() == 3 * l * l / 2,
            code.plaquettes
                .iter()
                .chain(code.stars.iter())
                .all(|s| s.support.len() == 3 || s.support.len() == 6),
        ),
    };
    checks.push(CheckResult {
        name: "counts",
        pass: spins_ok,
        failures: if spins_ok {
            vec![]
        } else {
            vec![format!(
                "num_spins {} plaquettes {} stars {}",
                code.num_spins,
                code.plaquettes.len(),
                code.stars.len()
            )]
        },
    });
    checks.push(CheckResult {
        name: "stabilizer_sizes",
        pass: sizes_ok,
        failures: if sizes_ok {
            vec![]
        } else {
            vec!["unexpected stabilizer support size".into()]
        },
    });

    // Code dimension: n - (stabilizers - 2) = 2 encoded qubits.
    let dim =
        code.num_spins as i64 - (code.plaquettes.len() as i64 + code.stars.len() as i64 - 2);
    checks.push(CheckResult {
        name: "code_dimension",
        pass: dim == 2,
        failures: if dim == 2 {
            vec![]
        } else {
            vec![format!("encoded qubits {dim}")]
        },
    });

    ValidationReport { checks }
}

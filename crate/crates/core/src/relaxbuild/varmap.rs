use serde::{Deserialize, Serialize};

/// Meaning of one program variable. Pole index `0` is `+`, `1` is `-`;
/// nodes and branches use dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarSymbol {
    V { pole: usize, node: usize },
    L { pole: usize, branch: usize },
    W { pole: usize, branch: usize },
    P { pole: usize, branch: usize },
    /// `V+ V-` at a node
    Product { node: usize },
    /// Consumption of one load entry
    PortLoad { load: usize },
    /// Net power drawn from one pole conductor at a node
    PoleLoad { pole: usize, node: usize },
    Dg { dg: usize },
    /// Injection of a balancer away from the slack on port `p` (0) or `n` (1)
    Vb { vb: usize, port: usize },
    /// Power leaving the slack node on one pole
    SlackSupply { pole: usize },
    /// Epigraph of a quadratic cost term
    CostEpigraph { term: usize },
}

impl std::fmt::Display for VarSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = |p: usize| if p == 0 { "+" } else { "-" };
        match *self {
            VarSymbol::V { pole, node } => write!(f, "V{}[{node}]", s(pole)),
            VarSymbol::L { pole, branch } => write!(f, "L{}[{branch}]", s(pole)),
            VarSymbol::W { pole, branch } => write!(f, "W{}[{branch}]", s(pole)),
            VarSymbol::P { pole, branch } => write!(f, "P{}[{branch}]", s(pole)),
            VarSymbol::Product { node } => write!(f, "v[{node}]"),
            VarSymbol::PortLoad { load } => write!(f, "load[{load}]"),
            VarSymbol::PoleLoad { pole, node } => write!(f, "Q{}[{node}]", s(pole)),
            VarSymbol::Dg { dg } => write!(f, "dg[{dg}]"),
            VarSymbol::Vb { vb, port } => write!(f, "vb[{vb}].{}", if port == 0 { "p" } else { "n" }),
            VarSymbol::SlackSupply { pole } => write!(f, "S{}", s(pole)),
            VarSymbol::CostEpigraph { term } => write!(f, "t[{term}]"),
        }
    }
}

/// Bijection between program columns and [`VarSymbol`]s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VarMap {
    pub symbols: Vec<VarSymbol>,
    pub v: [Vec<usize>; 2],
    pub l: [Vec<usize>; 2],
    pub w: Option<[Vec<usize>; 2]>,
    pub p: [Vec<usize>; 2],
    /// `None` at the slack node
    pub product: Vec<Option<usize>>,
    pub port_load: Vec<usize>,
    /// `None` at the slack node
    pub pole_load: [Vec<Option<usize>>; 2],
    pub dg: Vec<usize>,
    /// `None` for the balancer at the slack
    pub vb: Vec<Option<[usize; 2]>>,
    pub slack_supply: [usize; 2],
    pub epigraph: Vec<usize>,
}

impl VarMap {
    pub fn n_vars(&self) -> usize {
        self.symbols.len()
    }

    pub(crate) fn push(&mut self, sym: VarSymbol) -> usize {
        self.symbols.push(sym);
        self.symbols.len() - 1
    }

    pub fn index_of(&self, sym: VarSymbol) -> Option<usize> {
        self.symbols.iter().position(|s| *s == sym)
    }

    /// Checks that every index stored in the map names its own symbol and
    /// that no symbol repeats.
    pub fn is_bijective(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        if !self.symbols.iter().all(|s| seen.insert(*s)) {
            return false;
        }
        let mut used = vec![0usize; self.n_vars()];
        let mut mark = |k: usize| {
            if k < used.len() {
                used[k] += 1;
            }
        };
        for pole in 0..2 {
            self.v[pole].iter().for_each(|&k| mark(k));
            self.l[pole].iter().for_each(|&k| mark(k));
            self.p[pole].iter().for_each(|&k| mark(k));
            if let Some(w) = &self.w {
                w[pole].iter().for_each(|&k| mark(k));
            }
            self.pole_load[pole].iter().flatten().for_each(|&k| mark(k));
            mark(self.slack_supply[pole]);
        }
        self.product.iter().flatten().for_each(|&k| mark(k));
        self.port_load.iter().for_each(|&k| mark(k));
        self.dg.iter().for_each(|&k| mark(k));
        self.vb.iter().flatten().flatten().for_each(|&k| mark(k));
        self.epigraph.iter().for_each(|&k| mark(k));
        used.iter().all(|&u| u == 1)
    }
}

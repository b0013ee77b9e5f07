//! JSON files for instances and graphs. Matrices are row-major flat arrays
//! and indices are 1-based.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Graph, MbqpInstance, SeedInfo, SlackMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "Q")]
    pub quad: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub constraints: Vec<f64>,
    pub b: Vec<f64>,
    pub binaries: Vec<usize>,
    #[serde(default)]
    pub slack_map: SlackMap,
    #[serde(default)]
    pub seed_info: Option<SeedInfo>,
}

impl From<&MbqpInstance> for InstanceFile {
    fn from(inst: &MbqpInstance) -> Self {
        let n = inst.num_vars();
        let m = inst.num_rows();
        InstanceFile {
            n,
            m,
            quad: row_major(&inst.quad),
            c: inst.linear.iter().copied().collect(),
            constraints: row_major(&inst.constraints),
            b: inst.rhs.iter().copied().collect(),
            binaries: inst.binaries.iter().map(|j| j + 1).collect(),
            slack_map: inst.slack_map.clone(),
            seed_info: inst.seed_info.clone(),
        }
    }
}

impl TryFrom<InstanceFile> for MbqpInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let (n, m) = (f.n, f.m);
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Dimension(format!(
                    "field {name} has {got} entries, expected {want}"
                )))
            }
        };
        check("Q", f.quad.len(), n * n)?;
        check("c", f.c.len(), n)?;
        check("A", f.constraints.len(), m * n)?;
        check("b", f.b.len(), m)?;
        if f.binaries.contains(&0) {
            return Err(Error::InvalidArgument(
                "binary indices are 1-based; found 0".into(),
            ));
        }
        let inst = MbqpInstance::new(
            DMatrix::from_row_slice(n, n, &f.quad),
            DVector::from_vec(f.c),
            DMatrix::from_row_slice(m, n, &f.constraints),
            DVector::from_vec(f.b),
            f.binaries.iter().map(|j| j - 1).collect(),
            f.slack_map,
        )?;
        Ok(match f.seed_info {
            Some(info) => inst.with_seed_info(info),
            None => inst,
        })
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn write_instance(inst: &MbqpInstance, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&InstanceFile::from(inst))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<MbqpInstance> {
    let text = fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    MbqpInstance::try_from(file)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub num_vertices: usize,
    pub edges: Vec<[usize; 2]>,
}

impl From<&Graph> for GraphFile {
    fn from(g: &Graph) -> Self {
        GraphFile {
            num_vertices: g.num_vertices(),
            edges: g.edges().iter().map(|&(u, v)| [u + 1, v + 1]).collect(),
        }
    }
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        let mut edges = Vec::with_capacity(f.edges.len());
        for [u, v] in f.edges {
            if u == 0 || v == 0 {
                return Err(Error::InvalidArgument(
                    "graph vertices are 1-based; found 0".into(),
                ));
            }
            edges.push((u - 1, v - 1));
        }
        Graph::new(f.num_vertices, &edges)
    }
}

pub fn write_graph(g: &Graph, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&GraphFile::from(g))?)?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let file: GraphFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    Graph::try_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_ssqp;

    #[test]
    fn instance_round_trip() {
        let inst = generate_ssqp(3, 0.5, 4, 2).unwrap();
        let text = serde_json::to_string(&InstanceFile::from(&inst)).unwrap();
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        let back = MbqpInstance::try_from(back).unwrap();
        assert_eq!(back.quad, inst.quad);
        assert_eq!(back.constraints, inst.constraints);
        assert_eq!(back.binaries, inst.binaries);
        assert_eq!(back.slack_map, inst.slack_map);
        assert_eq!(back.seed_info, inst.seed_info);
    }

    #[test]
    fn graph_round_trip() {
        let g = Graph::petersen();
        let text = serde_json::to_string(&GraphFile::from(&g)).unwrap();
        let back = Graph::try_from(serde_json::from_str::<GraphFile>(&text).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}

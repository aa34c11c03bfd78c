//! Summary statistics of a model file.

use std::fmt;

use super::model_file::ModelFile;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelStats {
    pub dim: usize,
    pub atoms: usize,
    pub groups: usize,
    pub leaves: usize,
    pub depth: usize,
    pub max_group_size: usize,
    pub mean_group_size: f64,
    /// Groups containing each atom.
    pub popularity: Vec<usize>,
    /// `histogram[c]` = number of atoms that appear in exactly `c` groups.
    pub popularity_histogram: Vec<usize>,
    /// Leaves per depth.
    pub depth_histogram: Vec<usize>,
    pub classifier_classes: Option<Vec<String>>,
    pub config: String,
}

pub fn inspect(file: &ModelFile) -> ModelStats {
    let m = &file.model;
    let popularity = m.groups.popularity();
    let mut popularity_histogram = vec![0; popularity.iter().copied().max().unwrap_or(0) + 1];
    popularity
        .iter()
        .for_each(|&p| popularity_histogram[p] += 1);
    let mut depth_histogram = vec![0; m.tree.depth() + 1];
    (0..m.tree.n_leaves()).for_each(|l| depth_histogram[m.tree.leaf_depth(l)] += 1);
    let sizes: usize = m.groups.groups().iter().map(Vec::len).sum();
    ModelStats {
        dim: m.dict.dim(),
        atoms: m.dict.n_atoms(),
        groups: m.groups.len(),
        leaves: m.tree.n_leaves(),
        depth: m.tree.depth(),
        max_group_size: m.groups.max_group_size(),
        mean_group_size: sizes as f64 / m.groups.len() as f64,
        popularity,
        popularity_histogram,
        depth_histogram,
        classifier_classes: file.classifier.as_ref().map(|c| c.classes.clone()),
        config: file.config.clone(),
    }
}

impl fmt::Display for ModelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dimension:        {}", self.dim)?;
        writeln!(f, "atoms:            {}", self.atoms)?;
        writeln!(f, "groups:           {}", self.groups)?;
        writeln!(f, "leaves:           {}", self.leaves)?;
        writeln!(f, "tree depth:       {}", self.depth)?;
        writeln!(
            f,
            "group size:       max {}, mean {:.2}",
            self.max_group_size, self.mean_group_size
        )?;
        writeln!(f, "atom popularity (groups per atom: atoms)")?;
        for (c, n) in self
            .popularity_histogram
            .iter()
            .enumerate()
            .filter(|p| *p.1 > 0)
        {
            writeln!(f, "  {c:>6}: {n}")?;
        }
        let mut top: Vec<(usize, usize)> = self.popularity.iter().copied().enumerate().collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let shown: Vec<String> = top
            .iter()
            .take(10)
            .map(|(k, p)| format!("{k}:{p}"))
            .collect();
        writeln!(f, "most used atoms (atom:groups): {}", shown.join(" "))?;
        writeln!(f, "leaves per depth")?;
        for (d, n) in self.depth_histogram.iter().enumerate().filter(|p| *p.1 > 0) {
            writeln!(f, "  {d:>6}: {n}")?;
        }
        match &self.classifier_classes {
            Some(c) => writeln!(
                f,
                "classifier:       {} classes ({})",
                c.len(),
                c.join(", ")
            )?,
            None => writeln!(f, "classifier:       none")?,
        }
        writeln!(f, "training config:")?;
        for line in self.config.lines() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

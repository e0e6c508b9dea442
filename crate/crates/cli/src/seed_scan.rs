//! Recursive seed discovery with a parse check and per-logic inventory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use opfuzz_core::typing::SignatureTable;
use opfuzz_core::FormulaDocument;
use walkdir::WalkDir;

#[derive(Debug, Clone)]
pub struct SeedFile {
    pub path: PathBuf,
    pub logic: String,
    pub incremental: bool,
    pub text: String,
}

#[derive(Debug, Default)]
pub struct SeedInventory {
    pub seeds: Vec<SeedFile>,
    /// (path, reason) for files that failed to parse
    pub skipped: Vec<(PathBuf, String)>,
}

impl SeedInventory {
    pub fn per_logic_counts(&self) -> BTreeMap<String, (usize, usize)> {
        let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for seed in &self.seeds {
            let entry = counts.entry(seed.logic.clone()).or_default();
            entry.0 += 1;
            if seed.incremental {
                entry.1 += 1;
            }
        }
        counts
    }
}

pub fn seed_scan(dirs: &[PathBuf], table: &SignatureTable) -> SeedInventory {
    let names = table.operator_names();
    let mut inventory = SeedInventory::default();
    for dir in dirs {
        for entry in WalkDir::new(dir).sort_by_file_name() {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    inventory
                        .skipped
                        .push((e.path().unwrap_or(Path::new("?")).to_path_buf(), e.to_string()));
                    continue;
                }
            };
            if !entry.file_type().is_file()
                || entry.path().extension().and_then(|e| e.to_str()) != Some("smt2")
            {
                continue;
            }
            let path = entry.path().to_path_buf();
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    inventory.skipped.push((path, e.to_string()));
                    continue;
                }
            };
            match FormulaDocument::parse(&text, &names) {
                Ok(doc) => inventory.seeds.push(SeedFile {
                    logic: doc.logic().unwrap_or("unspecified").to_string(),
                    incremental: doc.check_sat_count() > 1,
                    path,
                    text,
                }),
                Err(e) => inventory.skipped.push((path, e.to_string())),
            }
        }
    }
    inventory
}

pub fn print_inventory(inventory: &SeedInventory) {
    println!("seeds: {}", inventory.seeds.len());
    println!("{:<16} {:>8} {:>8}", "logic", "files", "inc");
    for (logic, (total, inc)) in inventory.per_logic_counts() {
        println!("{logic:<16} {total:>8} {inc:>8}");
    }
    if !inventory.skipped.is_empty() {
        println!("skipped: {}", inventory.skipped.len());
        for (path, reason) in &inventory.skipped {
            println!("  {}: {reason}", path.display());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    fn table() -> SignatureTable {
        SignatureTable::core()
    }

    #[test]
    fn valid_and_broken_files_partition() {
        let dir = TempDir::new().unwrap();
        for i in 0..3 {
            fs::write(
                dir.path().join(format!("ok{i}.smt2")),
                "(set-logic QF_LIA)(declare-fun x () Int)(assert (> x 0))(check-sat)",
            )
            .unwrap();
        }
        fs::write(dir.path().join("broken.smt2"), "(assert (> x 0)").unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let inv = seed_scan(&[dir.path().to_path_buf()], &table());
        assert_eq!(inv.seeds.len(), 3);
        assert_eq!(inv.skipped.len(), 1);
    }

    #[test]
    fn incremental_detection() {
        let dir = TempDir::new().unwrap();
        fs::write(
            dir.path().join("inc.smt2"),
            "(assert true)(check-sat)(assert false)(check-sat)",
        )
        .unwrap();
        let inv = seed_scan(&[dir.path().to_path_buf()], &table());
        assert!(inv.seeds[0].incremental);
    }

    #[test]
    fn per_logic_counts_match_hand_count() {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("a.smt2"), "(set-logic NRA)(check-sat)").unwrap();
        fs::write(dir.path().join("b.smt2"), "(set-logic NRA)(check-sat)").unwrap();
        fs::write(dir.path().join("c.smt2"), "(set-logic QF_S)(check-sat)").unwrap();
        fs::write(dir.path().join("d.smt2"), "(check-sat)").unwrap();
        let inv = seed_scan(&[dir.path().to_path_buf()], &table());
        let counts = inv.per_logic_counts();
        assert_eq!(counts["NRA"], (2, 0));
        assert_eq!(counts["QF_S"], (1, 0));
        assert_eq!(counts["unspecified"], (1, 0));
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

const X86_32: &str = include_str!("../data/syscalls_x86_32.tab");
const X86_64: &str = include_str!("../data/syscalls_x86_64.tab");

/// Hard sanity cap on table size; real tables stay well under this.
pub const MAX_TABLE_INDEX: u32 = 512;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {0}: expected `name number`, got {1:?}")]
    Malformed(usize, String),
    #[error("line {0}: negative or non-numeric syscall number {1:?}")]
    BadNumber(usize, String),
    #[error("duplicate syscall number {0}")]
    Duplicate(u32),
    #[error("syscall number {0} exceeds sanity bound {MAX_TABLE_INDEX}")]
    TooLarge(u32),
    #[error("unknown built-in table {0:?} (expected x86-32 or x86-64)")]
    UnknownBuiltin(String),
    #[error("empty table")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Syscall number to name mapping; `max_index` fixes the length of every
/// count vector built downstream (length = max_index + 1).
#[derive(Debug, Clone)]
pub struct SyscallTable {
    entries: BTreeMap<u32, String>,
    max_index: u32,
}

impl SyscallTable {
    /// Parses a two-column `name number` table.
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (name, num) = match (it.next(), it.next()) {
                (Some(n), Some(v)) => (n, v),
                _ => return Err(TableError::Malformed(lineno + 1, line.to_string())),
            };
            let num: u32 = num
                .parse()
                .map_err(|_| TableError::BadNumber(lineno + 1, num.to_string()))?;
            if num > MAX_TABLE_INDEX {
                return Err(TableError::TooLarge(num));
            }
            if entries.insert(num, name.to_string()).is_some() {
                return Err(TableError::Duplicate(num));
            }
        }
        let max_index = *entries.keys().next_back().ok_or(TableError::Empty)?;
        Ok(SyscallTable { entries, max_index })
    }

    pub fn builtin(name: &str) -> Result<Self, TableError> {
        match name {
            "x86-32" => Self::parse(X86_32),
            "x86-64" => Self::parse(X86_64),
            other => Err(TableError::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, TableError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Loads a built-in table by name or a table file by path.
    pub fn load(source: &str) -> Result<Self, TableError> {
        match source {
            "x86-32" | "x86-64" => Self::builtin(source),
            path => Self::from_file(Path::new(path)),
        }
    }

    pub fn max_index(&self) -> u32 {
        self.max_index
    }

    /// Count-vector length for this table.
    pub fn vector_len(&self) -> usize {
        self.max_index as usize + 1
    }

    pub fn name(&self, number: u32) -> Option<&str> {
        self.entries.get(&number).map(String::as_str)
    }

    pub fn number(&self, name: &str) -> Option<u32> {
        self.entries
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(k, _)| *k)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_x86_32_matches_reference_rows() {
        let t = SyscallTable::builtin("x86-32").unwrap();
        assert_eq!(t.number("__NR_restart_syscall"), Some(0));
        assert_eq!(t.number("__NR_read"), Some(3));
        assert_eq!(t.number("__NR_execve"), Some(11));
        assert_eq!(t.number("__NR_chmod"), Some(15));
        assert_eq!(t.number("__NR_rseq"), Some(398));
        assert!(t.max_index() >= 398);
    }

    #[test]
    fn builtin_x86_64_has_execve_59() {
        let t = SyscallTable::builtin("x86-64").unwrap();
        assert_eq!(t.number("__NR_execve"), Some(59));
        assert_eq!(t.name(59), Some("__NR_execve"));
    }

    #[test]
    fn single_row_table() {
        let t = SyscallTable::parse("myscall 0").unwrap();
        assert_eq!(t.max_index(), 0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn ten_rows() {
        let text: String = (0..10).map(|i| format!("sc{i} {i}\n")).collect();
        let t = SyscallTable::parse(&text).unwrap();
        assert_eq!(t.max_index(), 9);
        assert_eq!(t.len(), 10);
    }

    #[test]
    fn duplicate_number_rejected() {
        assert!(matches!(
            SyscallTable::parse("a 1\nb 1"),
            Err(TableError::Duplicate(1))
        ));
    }

    #[test]
    fn negative_number_rejected() {
        assert!(matches!(
            SyscallTable::parse("a -1"),
            Err(TableError::BadNumber(..))
        ));
    }
}

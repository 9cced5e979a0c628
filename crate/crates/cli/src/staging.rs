//! Outputs are written into hidden temporary directories next to their
//! destinations and moved into place only once everything succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::error::{CliError, Result};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

struct Area {
    dest: PathBuf,
    tmp: TempDir,
}

/// A set of staged output files. Dropping it without [`Staging::commit`]
/// discards everything.
#[derive(Default)]
pub struct Staging {
    areas: Vec<Area>,
    /// Directories this staging created, removed again unless committed.
    created: Vec<PathBuf>,
    committed: bool,
}

impl Staging {
    pub fn new() -> Self {
        Self::default()
    }

    fn area(&mut self, dest_dir: &Path) -> Result<&Path> {
        let dest_dir = if dest_dir.as_os_str().is_empty() {
            Path::new(".")
        } else {
            dest_dir
        };
        let idx = match self.areas.iter().position(|a| a.dest == dest_dir) {
            Some(i) => i,
            None => {
                if let Some(top) = dest_dir
                    .ancestors()
                    .take_while(|a| !a.as_os_str().is_empty() && !a.exists())
                    .last()
                {
                    self.created.push(top.to_owned());
                }
                fs::create_dir_all(dest_dir).map_err(|e| io_err(dest_dir, e))?;
                let tmp = tempfile::Builder::new()
                    .prefix(".snowkit-stage-")
                    .tempdir_in(dest_dir)
                    .map_err(|e| io_err(dest_dir, e))?;
                self.areas.push(Area {
                    dest: dest_dir.to_owned(),
                    tmp,
                });
                self.areas.len() - 1
            }
        };
        Ok(self.areas[idx].tmp.path())
    }

    /// Staged location for a file that will end up at `dest_dir/rel`.
    pub fn path(&mut self, dest_dir: &Path, rel: &Path) -> Result<PathBuf> {
        let p = self.area(dest_dir)?.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        Ok(p)
    }

    /// Staged location for the file `dest`.
    pub fn file(&mut self, dest: &Path) -> Result<PathBuf> {
        let name = dest
            .file_name()
            .ok_or_else(|| CliError::Config(format!("{} is not a file path", dest.display())))?;
        self.path(dest.parent().unwrap_or(Path::new("")), Path::new(name))
    }

    /// Root of the staging area for `dest_dir`, for writers that lay out
    /// several files themselves.
    pub fn dir(&mut self, dest_dir: &Path) -> Result<PathBuf> {
        self.area(dest_dir).map(Path::to_owned)
    }

    /// Moves every staged file into place. If a move fails, files already
    /// moved are removed again. Returns the final paths in sorted order.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut moves = Vec::new();
        for a in &self.areas {
            let mut files = Vec::new();
            collect_files(a.tmp.path(), &mut files).map_err(|e| io_err(a.tmp.path(), e))?;
            files.sort();
            for f in files {
                let rel = f
                    .strip_prefix(a.tmp.path())
                    .expect("file under its staging root")
                    .to_owned();
                moves.push((f, a.dest.join(rel)));
            }
        }
        let mut done: Vec<PathBuf> = Vec::new();
        for (from, to) in &moves {
            let res = to
                .parent()
                .map_or(Ok(()), fs::create_dir_all)
                .and_then(|_| fs::rename(from, to));
            if let Err(e) = res {
                for d in &done {
                    let _ = fs::remove_file(d);
                }
                return Err(io_err(to, e));
            }
            done.push(to.clone());
        }
        self.committed = true;
        done.sort();
        Ok(done)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        self.areas.clear();
        if !self.committed {
            for dir in self.created.iter().rev() {
                let _ = remove_empty_tree(dir);
            }
        }
    }
}

/// Removes `dir` and its subdirectories as long as they hold no files.
fn remove_empty_tree(dir: &Path) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            remove_empty_tree(&entry.path())?;
        }
    }
    fs::remove_dir(dir)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let p = entry.path();
        if entry.file_type()?.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_moves_files() {
        let root = tempfile::tempdir().unwrap();
        let mut s = Staging::new();
        let a = s.file(&root.path().join("out/a.txt")).unwrap();
        fs::write(&a, "a").unwrap();
        let b = s.path(&root.path().join("out"), Path::new("images/b.bin")).unwrap();
        fs::write(&b, "b").unwrap();
        assert!(!root.path().join("out/a.txt").exists());
        let done = s.commit().unwrap();
        assert_eq!(done.len(), 2);
        assert_eq!(fs::read_to_string(root.path().join("out/a.txt")).unwrap(), "a");
        assert_eq!(fs::read_to_string(root.path().join("out/images/b.bin")).unwrap(), "b");
        assert_eq!(fs::read_dir(root.path().join("out")).unwrap().count(), 2);
    }

    #[test]
    fn drop_discards() {
        let root = tempfile::tempdir().unwrap();
        {
            let mut s = Staging::new();
            fs::write(s.file(&root.path().join("x.json")).unwrap(), "{}").unwrap();
            s.dir(&root.path().join("new/deeper")).unwrap();
        }
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }
}

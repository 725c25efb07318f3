use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Exclusive hold on a workspace home for a mutating session. The lock file
/// records the holder's pid; a lock left by a dead process is reclaimed.
#[derive(Debug)]
pub struct HomeLock {
    path: PathBuf,
}

impl HomeLock {
    pub fn acquire(home: &Path) -> Result<Self, String> {
        fs::create_dir_all(home).map_err(|e| e.to_string())?;
        let path = home.join(".lock");
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = write!(f, "{}", std::process::id());
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    if holder_alive(holder.trim()) {
                        return Err(format!("workspace {} is in use by pid {}", home.display(), holder.trim()));
                    }
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(e.to_string()),
            }
        }
        Err(format!("could not lock workspace {}", home.display()))
    }
}

fn holder_alive(pid: &str) -> bool {
    match pid.parse::<u32>() {
        Ok(p) if p == std::process::id() => true,
        Ok(p) => if Path::new("/proc").exists() { Path::new(&format!("/proc/{p}")).exists() } else { true },
        Err(_) => false,
    }
}

impl Drop for HomeLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

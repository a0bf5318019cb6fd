use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/index");
    let out = Command::new("git").args(["describe", "--always", "--dirty"]).output();
    if let Ok(out) = out {
        if out.status.success() {
            let id = String::from_utf8_lossy(&out.stdout);
            println!("cargo:rustc-env=RCOF_GIT_DESCRIBE={}", id.trim());
        }
    }
}

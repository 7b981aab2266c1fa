//! Scan a SQL query pool, validate it, and print the template index.
//!
//! ```text
//! cargo run -p redbench --example index_pool [pool_dir]
//! ```

use std::path::PathBuf;

use redbench::pool_index::{scan_pool, DEFAULT_TEMPLATE_RULE};

fn main() -> redbench::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/pools");
    let roots: Vec<PathBuf> = match std::env::args().nth(1) {
        Some(dir) => vec![PathBuf::from(dir)],
        None => vec![fixtures.join("mini_imdb"), fixtures.join("mini_tpcds")],
    };

    for root in roots {
        let pool = scan_pool(&root, DEFAULT_TEMPLATE_RULE)?;
        println!(
            "{}: {} template(s), {} instance(s), joins [{}, {}], {} distinct table(s)",
            root.display(),
            pool.template_count(),
            pool.instance_count(),
            pool.pool_min_joins(),
            pool.pool_max_joins(),
            pool.table_count(),
        );
        for template in pool.templates() {
            println!(
                "  template {:<4} joins {:>2}  norm {:.3}  instances {}",
                template.template_id,
                template.join_count,
                template.normalized_join,
                template.instance_count(),
            );
        }
        let validation = pool.validate();
        if validation.is_ok() {
            println!("  validation: ok");
        } else {
            for violation in &validation.violations {
                println!(
                    "  violation: template {} mixes join counts {:?}",
                    violation.template_id, violation.join_counts
                );
            }
        }
        println!();
    }
    Ok(())
}

//! Verify the hand-written reverse-mode gradients against a
//! finite-difference oracle on a tiny training instance.
//!
//! Parameters are grouped by how the objective routes gradients: the graph
//! encoder, text encoder, and temperature are differenced on the
//! contrastive + retrieval losses; the negative encoder and its prompt on
//! the weighted margin + semantics-opposite losses with the positive
//! embeddings frozen.

use tagcl::train::gradient_check;

fn main() -> tagcl::Result<()> {
    let report = gradient_check(0.5)?;
    println!("tolerance: {:.0e} (relative)", report.tolerance);
    for g in &report.groups {
        println!(
            "{:<22} max rel err {:.3e}  {}",
            g.group,
            g.max_rel_err,
            if g.pass { "PASS" } else { "FAIL" }
        );
        if let Some((tensor, row, col, analytic, fd)) = &g.worst {
            println!(
                "  worst element: {tensor}[{row},{col}]  analytic {analytic:+.6e}  fd {fd:+.6e}"
            );
        }
    }
    assert!(report.all_pass(), "gradient check failed");
    println!("all groups pass");
    Ok(())
}

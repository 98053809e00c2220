//! Graphviz export in the `+,b1,b2` edge-label convention.

use std::fmt::Write as _;

use delrev_core::AuthorizationState;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// One node per principal; one solid edge per active authorization, dashed
/// when inactive; negative authorizations are solid and labelled `-,F,F`.
pub fn export_dot(state: &AuthorizationState) -> String {
    let mut out = String::from("digraph authorizations {\n  node [shape=box, style=rounded];\n");
    for p in state.principals() {
        let soa = if p == state.soa() { " [peripheries=2]" } else { "" };
        writeln!(out, "  {}{soa};", quote(p.as_str())).unwrap();
    }
    for a in state.authorizations() {
        let style = if a.active { "solid" } else { "dashed" };
        writeln!(
            out,
            "  {} -> {} [label={}, style={style}];",
            quote(a.grantor.as_str()),
            quote(a.grantee.as_str()),
            quote(a.permission.label())
        )
        .unwrap();
    }
    for n in state.negatives() {
        writeln!(
            out,
            "  {} -> {} [label=\"-,F,F\", style=solid];",
            quote(n.grantor.as_str()),
            quote(n.grantee.as_str())
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use delrev_core::scenarios;
    use delrev_core::Principal;

    #[test]
    fn negative_scheme_figure() {
        let dot = export_dot(&scenarios::after_wln());
        assert!(dot.contains("\"A\" -> \"B\" [label=\"+,T,T\", style=dashed];"));
        assert!(dot.contains("\"A\" -> \"B\" [label=\"-,F,F\", style=solid];"));
        assert_eq!(dot.matches("style=dashed").count(), 3);
    }

    #[test]
    fn nodes_only() {
        let s = AuthorizationState::with_principals(Principal::new("A").unwrap(), [Principal::new("B").unwrap()]);
        assert_eq!(
            export_dot(&s),
            "digraph authorizations {\n  node [shape=box, style=rounded];\n  \"A\" [peripheries=2];\n  \"B\";\n}\n"
        );
    }
}

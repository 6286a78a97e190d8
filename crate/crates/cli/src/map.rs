use tandem_core::{FlexAssignment, Policy, ServerMode, State};

/// Character for the action at one state.
fn glyph(policy: &Policy, s: State) -> char {
    match policy.action(s) {
        None => '.',
        Some(a) if a.d1 == ServerMode::Idle && s.x1 > 0 && a.flex != FlexAssignment::Station1 => '*',
        Some(a) => match a.flex {
            FlexAssignment::Station1 => '1',
            FlexAssignment::Station2 => '2',
            FlexAssignment::Idle => '0',
        },
    }
}

/// Policy map with `x2` increasing upward and `x1` to the right.
pub fn render(policy: &Policy, x1_max: u32, x2_max: u32) -> String {
    let n = policy.n_max;
    let x1_max = x1_max.min(n);
    let x2_max = x2_max.min(n);
    let mut out = String::new();
    for x2 in (0..=x2_max).rev() {
        out.push_str(&format!("{x2:>4} |"));
        for x1 in 0..=x1_max {
            let c = if x1 + x2 > n { ' ' } else { glyph(policy, State::new(x1, x2)) };
            out.push(' ');
            out.push(c);
        }
        out.push('\n');
    }
    out.push_str("     +");
    out.push_str(&"--".repeat(x1_max as usize + 1));
    out.push('\n');
    out.push_str("      ");
    for x1 in 0..=x1_max {
        out.push_str(&format!("{:>2}", x1 % 10));
    }
    out.push_str("  x1\n");
    out.push_str("flexible server: 1 upstream, 2 downstream, 0 idle; * dedicated server 1 idles\n");
    out
}

//! Comment header stamped on every CSV artifact.

use std::io::{self, Write};

use crate::mesh::{DT_NU_TRUST, LAMBDA_H_TRUST};

/// Writes `# key: value` lines naming the config digest and the trust
/// thresholds in force. Readers skip lines starting with `#`.
pub fn write_header<W: Write>(mut w: W, digest: &str) -> io::Result<()> {
    writeln!(w, "# config_digest: {digest}")?;
    writeln!(w, "# lambda_h_trust: {LAMBDA_H_TRUST}")?;
    writeln!(w, "# dt_nu_trust: {DT_NU_TRUST}")
}

/// `(digest, lambda_h, dt_nu)` from a header, if all three are present.
pub fn read_header(text: &str) -> Option<(String, f64, f64)> {
    let mut digest = None;
    let (mut lh, mut dn) = (None, None);
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let Some((k, v)) = line.trim_start_matches('#').split_once(':') else {
            continue;
        };
        match k.trim() {
            "config_digest" => digest = Some(v.trim().to_string()),
            "lambda_h_trust" => lh = v.trim().parse().ok(),
            "dt_nu_trust" => dn = v.trim().parse().ok(),
            _ => {}
        }
    }
    Some((digest?, lh?, dn?))
}

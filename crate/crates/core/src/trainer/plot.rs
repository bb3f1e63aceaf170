use super::Checkpoint;

/// Static SVG line chart of train and validation loss per epoch.
pub fn history_svg(checkpoint: &Checkpoint) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let h = &checkpoint.history;
    let values: Vec<f64> = h.iter().flat_map(|r| [r.train_loss, r.val_loss]).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (h.len().max(2) - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / span;
    let line = |f: &dyn Fn(usize) -> f64| {
        (0..h.len())
            .map(|i| format!("{:.2},{:.2}", x(i), y(f(i))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{} loss per epoch (train: blue, validation: orange)</text>\n",
        checkpoint.config.loss.name()
    ));
    svg.push_str(&format!(
        "<text x=\"4\" y=\"{:.2}\" font-size=\"10\">{hi:.4}</text>\n<text x=\"4\" y=\"{:.2}\" font-size=\"10\">{lo:.4}</text>\n",
        PAD,
        H - PAD
    ));
    if !h.is_empty() {
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n",
            line(&|i| h[i].train_loss)
        ));
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"2\" points=\"{}\"/>\n",
            line(&|i| h[i].val_loss)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/** Display helpers: pure functions from API payloads to view data.
 *
 * Nothing here computes classifications; the triage string and every
 * probability pass through from the service untouched.
 */
/** Probabilities below this fraction collapse into one "other" bar. */
export const COLLAPSE_BELOW = 0.005;
export function percentLabel(fraction) {
    return (fraction * 100).toFixed(1);
}
/** Bars sorted by probability, tiny classes folded into "other". */
export function probabilityBars(probs) {
    const entries = Object.entries(probs).sort((a, b) => b[1] - a[1]);
    const kept = entries.filter(([, p]) => p >= COLLAPSE_BELOW);
    const folded = entries.filter(([, p]) => p < COLLAPSE_BELOW);
    if (kept.length === 0) {
        // degenerate simplex: show everything rather than an empty chart
        return entries.map(([label, p]) => bar(label, p));
    }
    const bars = kept.map(([label, p]) => bar(label, p));
    if (folded.length === 1) {
        // folding a single class would hide its name for no row saved
        bars.push(bar(folded[0][0], folded[0][1]));
    }
    else if (folded.length > 1) {
        const sum = folded.reduce((acc, [, p]) => acc + p, 0);
        bars.push(bar("other", sum));
    }
    return bars;
}
function bar(label, fraction) {
    return { label, fraction, percent: percentLabel(fraction) };
}
/** Banner color per triage level; the text itself is never rewritten. */
const TRIAGE_COLORS = {
    screen_positive_isolate_and_confirm_pcr: "red",
    indeterminate_review: "amber",
    screen_negative_monitor: "green",
};
export function triageColor(triage) {
    return TRIAGE_COLORS[triage] ?? "gray";
}
export const DECISION_LABELS = {
    isolated: "Isolate",
    referred_pcr: "Refer for PCR",
    released: "Release",
    pending: "Pending",
};
export function decisionLabel(decision) {
    return DECISION_LABELS[decision] ?? decision;
}
export function newCaseId(now = new Date(), rand = Math.random) {
    const stamp = now
        .toISOString()
        .replace(/[-:]/g, "")
        .replace(/\..*$/, "")
        .replace("T", "-");
    const suffix = Math.floor(rand() * 0xffff)
        .toString(16)
        .padStart(4, "0");
    return `case-${stamp}-${suffix}`;
}

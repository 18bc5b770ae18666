// Pure HTML renderers. Each takes fetched data and returns markup; the app
// swaps it into the page wholesale, so refreshing always reproduces the
// same screen from the same payloads.
export function escapeHtml(text) {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}
function attrValue(value) {
    return typeof value === "boolean" ? (value ? "true" : "false") : String(value);
}
function renderControl(attr) {
    const current = attrValue(attr.value);
    const options = attr.options
        .map(attrValue)
        .map((opt) => {
        const sel = opt === current ? " selected" : "";
        return `<option value="${escapeHtml(opt)}"${sel}>${escapeHtml(opt)}</option>`;
    })
        .join("");
    return `
    <label class="attr">
      <span class="attr-name">${escapeHtml(attr.name)}</span>
      <select class="attr-control" data-path="${escapeHtml(attr.path)}">${options}</select>
      <span class="attr-value">${escapeHtml(current)}</span>
    </label>`;
}
function renderCard(card) {
    const attrs = card.attributes.map(renderControl).join("");
    return `
    <article class="card" data-machine="${escapeHtml(card.machine)}">
      <h3>${escapeHtml(card.name)}</h3>
      ${attrs || '<p class="card-empty">(no controls)</p>'}
    </article>`;
}
export function renderView(view) {
    const stagePill = view.focus_stage
        ? `<span class="stage-pill">${escapeHtml(view.focus_stage)}</span>`
        : "";
    const buttons = view.visible_stages
        .map((s) => {
        const disabled = s.enabled ? "" : " disabled";
        return `<button class="stage"${disabled} data-path="${escapeHtml(s.path)}">` +
            `${escapeHtml(s.label)}</button>`;
    })
        .join("\n      ");
    const stages = buttons
        ? `<nav class="stage-buttons">\n      ${buttons}\n    </nav>`
        : '<p class="placeholder">nothing to interact with here</p>';
    const cards = view.submachines.map(renderCard).join("");
    const processes = view.available_processes.length
        ? `<ul class="processes">` +
            view.available_processes
                .map((p) => `<li class="process">${escapeHtml(p)}</li>`)
                .join("") +
            `</ul>`
        : "";
    const choice = view.pending_choice
        ? `
    <div class="choice">
      <p>Choose ${escapeHtml(view.pending_choice.label)}:</p>
      ${view.pending_choice.options
            .map((o) => `<button class="option" data-choice="${escapeHtml(o)}">` +
            `${escapeHtml(o)}</button>`)
            .join("")}
    </div>`
        : "";
    return `
  <section class="panel">
    <header><h2>${escapeHtml(view.focus_name)}</h2>${stagePill}</header>
    ${stages}
    <div class="cards">${cards}</div>
    ${processes}${choice}
  </section>`;
}
export function renderTimeline(trace, anomalies) {
    const rows = [...trace.occurrences]
        .sort((a, b) => a.time - b.time || a.step - b.step)
        .map((o) => `<li class="tick"><span class="tick-time">t=${o.time}</span> ` +
        `${escapeHtml(o.label)}</li>`);
    for (const a of anomalies.anomalies) {
        rows.push(`<li class="tick anomaly"><span class="tick-time">t=${a.detected_at}</span> ` +
            `missing ${escapeHtml(a.expected)}: transferred from ${escapeHtml(a.from)} ` +
            `but never received within ${a.window} steps</li>`);
    }
    if (!rows.length) {
        return '<section class="timeline"><p class="placeholder">no activity</p></section>';
    }
    return `<section class="timeline"><ol>${rows.join("")}</ol></section>`;
}
export function renderErrorBanner(message, retriable = false) {
    const retry = retriable ? ' <button class="retry">retry</button>' : "";
    return `<div class="banner error">${escapeHtml(message)}${retry}</div>`;
}

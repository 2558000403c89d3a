/**
 * Pure HTML/SVG string builders. Numbers are rendered verbatim with
 * String(...) — no rounding, no recomputation — so whatever the service
 * said is exactly what the human reads (and what tests assert on).
 */

import { RankingEntry } from "./api.js";
import { SessionView } from "./session.js";

export type UriResolver = (id: string) => string | undefined;

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function card(id: string, side: "first" | "second", uriFor: UriResolver): string {
  const uri = uriFor(id);
  const media = uri
    ? `<img src="${escapeHtml(uri)}" alt="${escapeHtml(id)}">`
    : `<div class="placeholder">${escapeHtml(id)}</div>`;
  return (
    `<button class="duel-card" data-side="${side}" data-id="${escapeHtml(id)}">` +
    `${media}<span class="card-id">${escapeHtml(id)}</span></button>`
  );
}

export function renderDuel(view: SessionView, uriFor: UriResolver): string {
  if (!view.duel) {
    return `<div class="duel empty">no duel yet</div>`;
  }
  const hint = view.busy ? `<p class="hint">submitting…</p>` : `<p class="hint">click the one you prefer</p>`;
  return (
    `<div class="duel${view.busy ? " busy" : ""}">` +
    card(view.duel.first, "first", uriFor) +
    card(view.duel.second, "second", uriFor) +
    `</div>` +
    hint
  );
}

/** Gallery rows exactly in service order — never re-sorted client-side. */
export function renderGallery(entries: RankingEntry[], uriFor: UriResolver): string {
  if (entries.length === 0) {
    return `<ol class="gallery empty"></ol>`;
  }
  const items = entries
    .map((entry) => {
      const uri = uriFor(entry.id);
      const thumb = uri
        ? `<img src="${escapeHtml(uri)}" alt="">`
        : `<span class="thumb-placeholder"></span>`;
      return (
        `<li data-id="${escapeHtml(entry.id)}">${thumb}` +
        `<span class="item-id">${escapeHtml(entry.id)}</span>` +
        `<span class="score">${String(entry.score)}</span></li>`
      );
    })
    .join("");
  return `<ol class="gallery">${items}</ol>`;
}

/** Drift-cosine polyline; a single point (zero events) renders as a dot. */
export function renderDriftChart(history: number[], width = 360, height = 120): string {
  if (history.length === 0) {
    return `<svg class="drift" width="${width}" height="${height}"></svg>`;
  }
  const pad = 8;
  const low = Math.min(...history, 1) - 0.02;
  const high = Math.max(...history, 1) + 0.02;
  const x = (index: number) =>
    history.length === 1
      ? width / 2
      : pad + (index * (width - 2 * pad)) / (history.length - 1);
  const y = (value: number) => pad + ((high - value) * (height - 2 * pad)) / (high - low);
  const last = history[history.length - 1]!;
  const label =
    `<text x="${width - pad}" y="${pad + 4}" text-anchor="end" class="drift-label">` +
    `drift ${String(last)}</text>`;
  if (history.length === 1) {
    return (
      `<svg class="drift" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">` +
      `<circle cx="${x(0)}" cy="${y(history[0]!)}" r="3"></circle>${label}</svg>`
    );
  }
  const points = history.map((value, index) => `${x(index)},${y(value)}`).join(" ");
  return (
    `<svg class="drift" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">` +
    `<polyline fill="none" points="${points}"></polyline>${label}</svg>`
  );
}

export function renderBanner(error: string | null): string {
  if (!error) {
    return `<div class="banner hidden"></div>`;
  }
  return `<div class="banner error">${escapeHtml(error)}</div>`;
}

export function renderStatus(view: SessionView): string {
  const seq = view.lastSeq === null ? "—" : String(view.lastSeq);
  const profile = view.profileId ? escapeHtml(view.profileId) : "—";
  return (
    `<div class="status">profile <code>${profile}</code>` +
    ` · events <span class="seq">${seq}</span>` +
    ` · gallery v<span class="gallery-version">${String(view.galleryVersion)}</span></div>`
  );
}

/**
 * Browser bootstrap: wire the session to the DOM.
 *
 * Configuration comes from the query string:
 *   ?service=http://127.0.0.1:8787   service base URL (required-ish; this default)
 *   &base=query-base                 corpus id to start the profile from
 *   &k=12                            gallery size
 *   &seed=42                         duel-scheduling seed
 *   &meta=/embeddings.meta.jsonl     optional metadata JSONL for display uris
 *
 * The optional meta file is the same sidecar the service loaded; the
 * service itself never serves images, so uris are resolved client-side
 * and missing ones fall back to id placeholder cards.
 */

import { ServiceClient } from "./api.js";
import { renderBanner, renderDriftChart, renderDuel, renderGallery, renderStatus } from "./render.js";
import { PreferenceSession, Side } from "./session.js";

async function loadUriMap(metaUrl: string | null): Promise<Map<string, string>> {
  const map = new Map<string, string>();
  if (!metaUrl) {
    return map;
  }
  const response = await fetch(metaUrl);
  if (!response.ok) {
    return map;
  }
  const text = await response.text();
  for (const line of text.split("\n")) {
    if (!line.trim()) {
      continue;
    }
    try {
      const record = JSON.parse(line) as { id?: string; uri?: string };
      if (record.id && record.uri) {
        map.set(record.id, record.uri);
      }
    } catch {
      // tolerate stray lines; uris are cosmetic
    }
  }
  return map;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const serviceUrl = params.get("service") ?? "http://127.0.0.1:8787";
  const baseId = params.get("base") ?? "query-base";
  const galleryK = Number(params.get("k") ?? "12");
  const seed = Number(params.get("seed") ?? "42");

  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app container");
  }

  const uriMap = await loadUriMap(params.get("meta"));
  const uriFor = (id: string) => uriMap.get(id);
  const session = new PreferenceSession(new ServiceClient(serviceUrl), {
    seed,
    galleryK,
  });

  const draw = () => {
    const view = session.view();
    root.innerHTML =
      renderBanner(view.error) +
      renderStatus(view) +
      `<section class="pane duel-pane">${renderDuel(view, uriFor)}</section>` +
      `<section class="pane chart-pane">${renderDriftChart(view.driftHistory)}</section>` +
      `<section class="pane gallery-pane">${renderGallery(view.gallery, uriFor)}</section>`;
    for (const button of root.querySelectorAll<HTMLButtonElement>(".duel-card")) {
      button.addEventListener("click", () => {
        const side = button.dataset.side as Side;
        void session.submitChoice(side).then(draw);
      });
    }
  };

  draw();
  await session.start({ baseId });
  draw();
}

void boot();

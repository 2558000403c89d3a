/**
 * Live loop against a real service: simulate a corpus, boot the Python
 * server, run a scripted 10-choice session, and verify the elicitation
 * contract end to end — strictly increasing seq, a fresh gallery after
 * every choice, and the clicked winner never losing ground to the loser
 * on the immediately following fetch.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { RankingEntry, ServiceClient } from "../src/api.js";
import { PreferenceSession } from "../src/session.js";

const PYTHON = process.env.PREFADAPT_PYTHON ?? "python3";
const CORPUS_SIZE = 20;

let workDir: string;
let server: ChildProcess | null = null;
let baseUrl: string;

function run(cmd: string, args: string[]): Promise<void> {
  return new Promise((resolve, reject) => {
    const child = spawn(cmd, args, { stdio: ["ignore", "ignore", "pipe"] });
    let stderr = "";
    child.stderr?.on("data", (chunk) => (stderr += chunk));
    child.on("error", reject);
    child.on("exit", (code) =>
      code === 0 ? resolve() : reject(new Error(`${cmd} ${args.join(" ")} -> ${code}\n${stderr}`)),
    );
  });
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer();
    probe.on("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address() as net.AddressInfo;
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitHealthy(url: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (server?.exitCode != null) {
      throw new Error(`server exited early with ${server.exitCode}`);
    }
    try {
      const response = await fetch(`${url}/healthz`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("service never became healthy");
}

beforeAll(async () => {
  workDir = mkdtempSync(path.join(os.tmpdir(), "prefadapt-ui-"));
  const simDir = path.join(workDir, "sim");
  await run(PYTHON, [
    "-m", "prefadapt", "simulate",
    "--dim", "8", "--count", String(CORPUS_SIZE), "--pairs-count", "40",
    "--seed", "1", "--out-dir", simDir, "--quiet",
  ]);
  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  server = spawn(PYTHON, [
    "-m", "prefadapt", "serve",
    "--matrix", path.join(simDir, "embeddings.pemb"),
    "--meta", path.join(simDir, "embeddings.meta.jsonl"),
    "--data-dir", path.join(workDir, "profiles"),
    "--listen", `127.0.0.1:${port}`,
    "--quiet",
  ], { stdio: ["ignore", "ignore", "pipe"] });
  await waitHealthy(baseUrl);
});

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(workDir, { recursive: true, force: true });
});

function positions(gallery: RankingEntry[], id: string): number {
  const index = gallery.findIndex((entry) => entry.id === id);
  expect(index, `${id} missing from gallery`).toBeGreaterThanOrEqual(0);
  return index;
}

function score(gallery: RankingEntry[], id: string): number {
  return gallery[positions(gallery, id)]!.score;
}

describe("scripted elicitation session against the live service", () => {
  it("completes 10 choices with increasing seq, fresh galleries, and improving winners", async () => {
    // Gallery size = corpus size so both duel candidates are always visible.
    const session = new PreferenceSession(new ServiceClient(baseUrl), {
      seed: 42,
      galleryK: CORPUS_SIZE + 2,
    });
    let view = await session.start({ baseId: "query-base" });
    expect(view.error).toBeNull();
    expect(view.profileId).not.toBeNull();
    expect(view.driftHistory).toEqual([1.0]);
    expect(view.gallery.length).toBe(CORPUS_SIZE + 2);

    const seqs: number[] = [];
    let galleryVersion = view.galleryVersion;
    for (let round = 0; round < 10; round++) {
      const duel = view.duel!;
      const side = round % 2 === 0 ? "first" : "second";
      const winner = side === "first" ? duel.first : duel.second;
      const loser = side === "first" ? duel.second : duel.first;
      const before = view.gallery;

      view = await session.submitChoice(side);
      expect(view.error).toBeNull();
      seqs.push(view.lastSeq!);

      // gallery refreshed after each acknowledged choice
      expect(view.galleryVersion).toBe(galleryVersion + 1);
      galleryVersion = view.galleryVersion;

      // the clicked winner's margin over the loser strictly improves ...
      const marginBefore = score(before, winner) - score(before, loser);
      const marginAfter = score(view.gallery, winner) - score(view.gallery, loser);
      expect(marginAfter).toBeGreaterThan(marginBefore);

      // ... so its rank relative to the loser never worsens in order:
      // once above, never below on the immediately following fetch.
      if (positions(before, winner) < positions(before, loser)) {
        expect(positions(view.gallery, winner)).toBeLessThan(positions(view.gallery, loser));
      }

      // consecutive duels are never the identical pair
      const next = view.duel!;
      const sameAsBefore =
        (next.first === duel.first && next.second === duel.second) ||
        (next.first === duel.second && next.second === duel.first);
      expect(sameAsBefore).toBe(false);
    }

    expect(seqs).toEqual([1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
    expect(view.driftHistory.length).toBe(11);

    // the server agrees the profile saw all ten events
    const profile = await new ServiceClient(baseUrl).getProfile(view.profileId!);
    expect(profile.event_count).toBe(10);
  });
});

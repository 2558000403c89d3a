/**
 * Session state machine for live preference elicitation.
 *
 * The human sees two candidates, clicks the preferred one, the service
 * applies the update, and the gallery re-ranks. This class holds no model
 * math at all: every number in the view (scores, drift, seq) arrives
 * verbatim from service responses. Choices are submitted strictly
 * sequentially; while one is in flight further clicks are ignored and no
 * new duel appears until the event is acknowledged.
 */

import { RankingEntry, ServiceClient } from "./api.js";
import { DuelScheduler } from "./scheduler.js";

export type Side = "first" | "second";

export interface Duel {
  first: string;
  second: string;
}

export interface SessionView {
  profileId: string | null;
  duel: Duel | null;
  gallery: RankingEntry[];
  /** Bumps on every gallery refetch, so the UI can prove freshness. */
  galleryVersion: number;
  /** Drift cosine after 0, 1, 2, ... events, as reported by the service. */
  driftHistory: number[];
  lastSeq: number | null;
  error: string | null;
  busy: boolean;
}

export interface SessionOptions {
  seed: number;
  /** Gallery size; also bounds the corpus discovered via whole-corpus rank. */
  galleryK: number;
}

export interface BaseChoice {
  baseId?: string;
  baseVector?: number[];
}

function message(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}

export class PreferenceSession {
  private readonly client: ServiceClient;
  private readonly options: SessionOptions;
  private scheduler: DuelScheduler | null = null;
  private state: SessionView = {
    profileId: null,
    duel: null,
    gallery: [],
    galleryVersion: 0,
    driftHistory: [],
    lastSeq: null,
    error: null,
    busy: false,
  };

  constructor(client: ServiceClient, options: SessionOptions) {
    this.client = client;
    this.options = options;
  }

  view(): SessionView {
    return {
      ...this.state,
      gallery: [...this.state.gallery],
      driftHistory: [...this.state.driftHistory],
      duel: this.state.duel ? { ...this.state.duel } : null,
    };
  }

  /** Create the profile, read its baseline drift, fetch the first gallery,
   * and deal the first duel. Failures land in the error banner. */
  async start(base: BaseChoice): Promise<SessionView> {
    this.state.busy = true;
    this.state.error = null;
    try {
      const created = await this.client.createProfile({
        base_id: base.baseId,
        base_vector: base.baseVector,
      });
      const profile = await this.client.getProfile(created.profile_id);
      // Whole-corpus ranking doubles as corpus discovery for the scheduler.
      const gallery = await this.client.rank(created.profile_id, this.options.galleryK);
      this.scheduler = new DuelScheduler(
        gallery.map((entry) => entry.id),
        this.options.seed,
      );
      const [first, second] = this.scheduler.next();
      this.state = {
        profileId: created.profile_id,
        duel: { first, second },
        gallery,
        galleryVersion: 1,
        driftHistory: [profile.drift_cosine],
        lastSeq: null,
        error: null,
        busy: false,
      };
    } catch (error) {
      this.state.busy = false;
      this.state.error = message(error);
    }
    return this.view();
  }

  /** Submit the clicked side as winner; ignored while a choice is in
   * flight (double clicks submit once). On failure the duel is kept so the
   * user can retry; no local state is touched. */
  async submitChoice(side: Side): Promise<SessionView> {
    if (this.state.busy || !this.state.profileId || !this.state.duel || !this.scheduler) {
      return this.view();
    }
    const duel = this.state.duel;
    const winnerId = side === "first" ? duel.first : duel.second;
    const loserId = side === "first" ? duel.second : duel.first;
    this.state.busy = true;
    this.state.error = null;
    try {
      const ack = await this.client.recordEvent(this.state.profileId, winnerId, loserId);
      const gallery = await this.client.rank(this.state.profileId, this.options.galleryK);
      this.state.lastSeq = ack.seq;
      this.state.driftHistory = [...this.state.driftHistory, ack.drift_cosine];
      this.state.gallery = gallery;
      this.state.galleryVersion += 1;
      const [first, second] = this.scheduler.next();
      this.state.duel = { first, second };
      this.state.busy = false;
    } catch (error) {
      this.state.busy = false;
      this.state.error = message(error);
    }
    return this.view();
  }
}

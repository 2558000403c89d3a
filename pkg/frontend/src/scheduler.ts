/**
 * Seeded duel scheduling: uniform random distinct pairs from the corpus,
 * never repeating the immediately previous duel (as an unordered pair).
 */

/** Small deterministic PRNG (mulberry32); good enough for shuffling duels. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let mixed = state;
    mixed = Math.imul(mixed ^ (mixed >>> 15), mixed | 1);
    mixed ^= mixed + Math.imul(mixed ^ (mixed >>> 7), mixed | 61);
    return ((mixed ^ (mixed >>> 14)) >>> 0) / 4294967296;
  };
}

export class DuelScheduler {
  private readonly ids: string[];
  private readonly random: () => number;
  private previous: [string, string] | null = null;

  constructor(ids: string[], seed: number) {
    if (ids.length < 2) {
      throw new Error(`need at least 2 candidates to schedule duels, got ${ids.length}`);
    }
    this.ids = [...ids];
    this.random = mulberry32(seed);
  }

  private samePair(a: [string, string], b: [string, string]): boolean {
    return (a[0] === b[0] && a[1] === b[1]) || (a[0] === b[1] && a[1] === b[0]);
  }

  next(): [string, string] {
    // With exactly two candidates there is only one unordered pair, so the
    // no-immediate-repeat rule cannot apply.
    const canAvoidRepeat = this.ids.length > 2;
    for (;;) {
      const first = Math.floor(this.random() * this.ids.length);
      const offset = 1 + Math.floor(this.random() * (this.ids.length - 1));
      const second = (first + offset) % this.ids.length;
      const duel: [string, string] = [this.ids[first]!, this.ids[second]!];
      if (canAvoidRepeat && this.previous && this.samePair(duel, this.previous)) {
        continue;
      }
      this.previous = duel;
      return duel;
    }
  }
}

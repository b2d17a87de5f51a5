import type { ReviewApi } from "./api.js";
import type { Candidate, Decision } from "./types.js";

export type QueueFilter = "pending" | "all";

/** Candidate-queue state. Reads come from the service once per load; a
 * decision updates the row in place (optimistic, reverted on failure) so the
 * pending filter hides it without a reload. */
export class QueueStore {
  candidates: Candidate[] = [];
  filter: QueueFilter = "pending";
  error: string | null = null;
  loading = false;
  selected: string | null = null;

  constructor(
    private api: ReviewApi,
    private annotator: string = "reviewer",
  ) {}

  async load(): Promise<void> {
    this.loading = true;
    this.error = null;
    try {
      const page = await this.api.listCandidates({ limit: 500 });
      this.candidates = page.candidates;
    } catch (err) {
      this.error = err instanceof Error ? err.message : String(err);
    } finally {
      this.loading = false;
    }
  }

  get visible(): Candidate[] {
    if (this.filter === "pending") {
      return this.candidates.filter((c) => c.decision === "pending");
    }
    return this.candidates;
  }

  get pending(): Candidate[] {
    return this.candidates.filter((c) => c.decision === "pending");
  }

  get isEmpty(): boolean {
    return !this.loading && this.error === null && this.visible.length === 0;
  }

  select(chipId: string): Candidate | undefined {
    this.selected = chipId;
    return this.candidates.find((c) => c.chip_id === chipId);
  }

  /** Exactly one POST per call; the row flips immediately and flips back if
   * the service rejects the decision. */
  async mark(chipId: string, decision: Decision): Promise<void> {
    const row = this.candidates.find((c) => c.chip_id === chipId);
    if (!row) throw new Error(`unknown candidate ${chipId}`);
    const previous = row.decision;
    row.decision = decision;
    try {
      await this.api.recordDecision(chipId, decision, this.annotator);
    } catch (err) {
      row.decision = previous;
      this.error = err instanceof Error ? err.message : String(err);
    }
  }

  async retry(): Promise<void> {
    await this.load();
  }
}

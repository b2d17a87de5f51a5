import type { Candidate, CandidatePage, Decision, DecisionAck, FetchLike } from "./types.js";

/** Thin typed client for the review service; all state changes go through
 * recordDecision, nothing else mutates the backend. */
export class ReviewApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async listCandidates(params: {
    state?: string;
    cell?: string;
    offset?: number;
    limit?: number;
  } = {}): Promise<CandidatePage> {
    const query = new URLSearchParams();
    if (params.state !== undefined) query.set("state", params.state);
    if (params.cell !== undefined) query.set("cell", params.cell);
    if (params.offset !== undefined) query.set("offset", String(params.offset));
    if (params.limit !== undefined) query.set("limit", String(params.limit));
    const qs = query.toString();
    const resp = await this.fetchFn(`${this.baseUrl}/api/candidates${qs ? "?" + qs : ""}`);
    if (!resp.ok) throw new Error(`candidate listing failed: HTTP ${resp.status}`);
    return (await resp.json()) as CandidatePage;
  }

  async recordDecision(
    candidate: Candidate | string,
    decision: Decision,
    annotator: string,
  ): Promise<DecisionAck> {
    const candidate_id = typeof candidate === "string" ? candidate : candidate.chip_id;
    const resp = await this.fetchFn(`${this.baseUrl}/api/decisions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ candidate_id, decision, annotator }),
    });
    if (!resp.ok) throw new Error(`decision rejected: HTTP ${resp.status}`);
    return (await resp.json()) as DecisionAck;
  }

  tileUrl(layer: string, z: number, x: number, y: number): string {
    return `${this.baseUrl}/tiles/${layer}/${z}/${x}/${y}.png`;
  }
}

export function formatEntropy(value: number): string {
  return value.toFixed(3);
}

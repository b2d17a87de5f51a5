export type Decision = "failure" | "clean";

export interface Candidate {
  chip_id: string;
  cell_id: string;
  entropy: number;
  decision: string;
  source: string;
  center_lon?: number | null;
  center_lat?: number | null;
}

export interface CandidatePage {
  total: number;
  offset: number;
  limit: number;
  candidates: Candidate[];
}

export interface DecisionAck {
  candidate_id: string;
  decision: string;
  revision: number;
  timestamp: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

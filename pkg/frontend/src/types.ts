// Wire types mirroring the server's JSON surface.

export interface PathProcess {
  name: string;
  stage_kind: string;
}

export interface PathInfo {
  name: string;
  init: string;
  processes: PathProcess[];
}

export interface AgreementSummary {
  id: string;
  status: 'active' | 'terminated';
  active_process?: string;
  outcome?: string;
  created_at: string;
}

export interface TransitionRecord {
  seq: number;
  from_process: string | null;
  to_process: string | null;
  cause: string;
  payload: unknown;
  at: string;
}

export type DataModelTree = Record<string, Record<string, unknown>>;

export interface AgreementDetail {
  id: string;
  path: string;
  status: 'active' | 'terminated';
  active_process: string | null;
  outcome: string | null;
  created_at: string;
  data_model: DataModelTree;
  history: TransitionRecord[];
}

export interface DispatchOutcome {
  disposition: 'created' | 'delivered' | 'rejected' | 'ignored_terminated';
  agreement_id?: string;
  status?: string;
  active_process?: string;
  outcome?: string;
}

export interface Actor {
  platform: string;
  handle: string;
}

export interface Correlation {
  agreement_id?: string;
  thread_id?: string;
}

export interface EnvelopeBody {
  source: string;
  kind: string;
  actor: Actor;
  payload: Record<string, unknown>;
  correlation?: Correlation;
}

export type OutboxEntry =
  | { kind: 'status'; id: string; text: string; thread_id: string | null }
  | { kind: 'dm'; to: string; text: string }
  | { kind: 'email'; to: string; subject: string; body: string };

export interface EscrowSnapshot {
  balances: Record<string, number>;
  holds: Record<string, { amount: number; from: { handle: string; amount: number }[]; beneficiary: string }>;
  settled: Record<string, string>;
}

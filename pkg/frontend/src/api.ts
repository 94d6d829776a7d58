import type {
  AgreementDetail,
  AgreementSummary,
  DispatchOutcome,
  EnvelopeBody,
  EscrowSnapshot,
  OutboxEntry,
  PathInfo,
} from './types.js';

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function errorMessage(res: Response): Promise<string> {
  const body = await res.json().catch(() => null);
  const fromServer = (body as { error?: string } | null)?.error;
  return fromServer ?? `request failed (${res.status})`;
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private async get<T>(route: string): Promise<T> {
    const res = await fetch(`${this.baseUrl}${route}`);
    if (!res.ok) {
      throw new ApiError(await errorMessage(res), res.status);
    }
    return res.json() as Promise<T>;
  }

  fetchPaths(): Promise<PathInfo[]> {
    return this.get('/paths');
  }

  fetchAgreements(path: string): Promise<AgreementSummary[]> {
    return this.get(`/${encodeURIComponent(path)}/agreements`);
  }

  fetchAgreement(path: string, id: string): Promise<AgreementDetail> {
    return this.get(`/${encodeURIComponent(path)}/agreements/${encodeURIComponent(id)}`);
  }

  fetchSocialOutbox(): Promise<OutboxEntry[]> {
    return this.get('/_mock/social/outbox');
  }

  fetchMailOutbox(): Promise<OutboxEntry[]> {
    return this.get('/_mock/mail/outbox');
  }

  fetchEscrow(): Promise<EscrowSnapshot> {
    return this.get('/_mock/escrow');
  }

  async submitEnvelope(path: string, body: EnvelopeBody): Promise<DispatchOutcome> {
    const res = await fetch(`${this.baseUrl}/${encodeURIComponent(path)}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      throw new ApiError(await errorMessage(res), res.status);
    }
    return res.json() as Promise<DispatchOutcome>;
  }
}

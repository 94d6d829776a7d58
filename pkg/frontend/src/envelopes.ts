// Canonical envelope builders plus the client-side validation gate.
// Every console action goes through one of these, so the console can only
// ever produce requests the public wire format allows.

import type { Actor, EnvelopeBody } from './types.js';

export const VERDICTS = ['upheld', 'broken'] as const;
export type Verdict = (typeof VERDICTS)[number];

export type Validation<T> = { ok: true; value: T } | { ok: false; error: string };

export function validateAmount(raw: string): Validation<number> {
  const trimmed = raw.trim();
  if (!/^\d+$/.test(trimmed)) {
    return { ok: false, error: 'amount must be a positive whole number of units' };
  }
  const amount = Number(trimmed);
  if (amount <= 0) {
    return { ok: false, error: 'amount must be a positive whole number of units' };
  }
  return { ok: true, value: amount };
}

export function validateVerdict(raw: string): Validation<Verdict> {
  const token = raw.trim().toLowerCase();
  if ((VERDICTS as readonly string[]).includes(token)) {
    return { ok: true, value: token as Verdict };
  }
  return { ok: false, error: `verdict must be one of: ${VERDICTS.join(', ')}` };
}

export function validateHandle(raw: string, label: string): Validation<string> {
  const handle = raw.trim().replace(/^@/, '');
  if (!handle) {
    return { ok: false, error: `${label} is required` };
  }
  return { ok: true, value: handle };
}

export function pledgeEnvelope(
  actor: Actor,
  author: string,
  topic: string,
  amount: number,
): EnvelopeBody {
  return {
    source: 'web-form',
    kind: 'pledge',
    actor,
    payload: { author, topic, amount },
  };
}

export function approvalEnvelope(actor: Actor, decision: 'accept' | 'reject'): EnvelopeBody {
  return {
    source: 'social',
    kind: 'dm',
    actor,
    payload: { text: decision },
  };
}

export function essayEnvelope(
  actor: Actor,
  author: string,
  topic: string,
  title: string,
  body: string,
): EnvelopeBody {
  return {
    source: 'web-form',
    kind: 'essay_submission',
    actor,
    payload: { author, topic, title, body },
  };
}

export function mentionEnvelope(
  actor: Actor,
  counterparty: string,
  terms: string,
  threadId?: string,
): EnvelopeBody {
  const text = `@${counterparty} ${terms} agreement`;
  const body: EnvelopeBody = {
    source: 'social',
    kind: 'status_mention',
    actor,
    payload: { text, counterparty },
  };
  if (threadId) {
    body.correlation = { thread_id: threadId };
  }
  return body;
}

export function verdictEnvelope(actor: Actor, verdict: Verdict, threadId: string): EnvelopeBody {
  return {
    source: 'social',
    kind: 'reply',
    actor,
    payload: { verdict },
    correlation: { thread_id: threadId },
  };
}

export function abandonEnvelope(actor: Actor, threadId: string): EnvelopeBody {
  return {
    source: 'social',
    kind: 'abandon',
    actor,
    payload: {},
    correlation: { thread_id: threadId },
  };
}

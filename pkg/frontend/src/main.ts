// Console bootstrap: a single 2s polling loop feeds the render pass;
// forms POST canonical envelopes and trigger an immediate refresh.

import { ApiClient, ApiError } from './api.js';
import {
  abandonEnvelope,
  approvalEnvelope,
  essayEnvelope,
  mentionEnvelope,
  pledgeEnvelope,
  validateAmount,
  validateHandle,
  validateVerdict,
  verdictEnvelope,
} from './envelopes.js';
import {
  renderAgreementList,
  renderBanner,
  renderDetail,
  renderOutboxes,
  renderPathList,
  el,
} from './render.js';
import type {
  Actor,
  AgreementDetail,
  AgreementSummary,
  EnvelopeBody,
  EscrowSnapshot,
  OutboxEntry,
  PathInfo,
} from './types.js';
import { agreementKey, availableActions, rootThread, type ActionForm } from './view.js';

const POLL_INTERVAL_MS = 2000;

interface ConsoleState {
  paths: PathInfo[];
  selectedPath: string | null;
  agreements: AgreementSummary[];
  selectedAgreement: string | null;
  detail: AgreementDetail | null;
  social: OutboxEntry[];
  mail: OutboxEntry[];
  escrow: EscrowSnapshot;
  error: string | null;
  lastOutcome: string | null;
  inFlight: boolean;
}

const state: ConsoleState = {
  paths: [],
  selectedPath: null,
  agreements: [],
  selectedAgreement: null,
  detail: null,
  social: [],
  mail: [],
  escrow: { balances: {}, holds: {}, settled: {} },
  error: null,
  lastOutcome: null,
  inFlight: false,
};

function baseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('server');
  const stored = window.localStorage.getItem('accord-server');
  return fromQuery ?? stored ?? 'http://127.0.0.1:8080';
}

let client = new ApiClient(baseUrl());

function actor(): Actor {
  const platform = (document.getElementById('actor-platform') as HTMLInputElement)?.value || 'web-form';
  const handle = (document.getElementById('actor-handle') as HTMLInputElement)?.value || 'guest';
  return { platform, handle: handle.replace(/^@/, '') };
}

async function refresh(): Promise<void> {
  try {
    const paths = await client.fetchPaths();
    state.paths = paths;
    if (state.selectedPath === null && paths.length > 0) {
      state.selectedPath = paths[0].name;
    }
    if (state.selectedPath !== null) {
      state.agreements = await client.fetchAgreements(state.selectedPath);
      if (
        state.selectedAgreement !== null &&
        !state.agreements.some((a) => a.id === state.selectedAgreement)
      ) {
        state.selectedAgreement = null;
      }
      state.detail =
        state.selectedAgreement !== null
          ? await client.fetchAgreement(state.selectedPath, state.selectedAgreement)
          : null;
    }
    [state.social, state.mail, state.escrow] = await Promise.all([
      client.fetchSocialOutbox(),
      client.fetchMailOutbox(),
      client.fetchEscrow(),
    ]);
    state.error = null;
  } catch (err) {
    // Keep the stale view; just surface the banner.
    state.error = err instanceof Error ? `server unreachable: ${err.message}` : 'server unreachable';
  }
  render();
}

async function submit(path: string, body: EnvelopeBody): Promise<void> {
  state.inFlight = true;
  render();
  try {
    const outcome = await client.submitEnvelope(path, body);
    state.lastOutcome =
      `${outcome.disposition}` +
      (outcome.agreement_id ? ` · ${outcome.agreement_id}` : '') +
      (outcome.outcome ? ` · outcome ${outcome.outcome}` : '');
    if (outcome.agreement_id && outcome.disposition === 'created') {
      state.selectedAgreement = outcome.agreement_id;
    }
  } catch (err) {
    state.lastOutcome = err instanceof ApiError ? `error ${err.status}: ${err.message}` : String(err);
  } finally {
    state.inFlight = false;
  }
  await refresh();
}

function field(label: string, input: HTMLElement): HTMLElement {
  return el('label', { class: 'field' }, [label, input]);
}

function textInput(id: string, placeholder = ''): HTMLInputElement {
  return el('input', { id, type: 'text', placeholder });
}

function formError(form: HTMLElement, message: string): void {
  form.querySelector('.form-error')?.remove();
  form.append(el('p', { class: 'form-error' }, [message]));
}

function buildForm(kind: ActionForm): HTMLElement {
  const form = el('form', { class: `action-form form-${kind}` });
  const submitButton = el('button', { type: 'submit' }, [kind]);
  if (state.inFlight) submitButton.setAttribute('disabled', 'disabled');
  const detail = state.detail;
  const path = state.selectedPath as string;

  const inputs: Record<string, HTMLInputElement> = {};
  const add = (name: string, placeholder: string, value = '') => {
    const input = textInput(`${kind}-${name}`, placeholder);
    input.value = value;
    inputs[name] = input;
    form.append(field(name, input));
  };

  const key = detail ? agreementKey(detail) : null;
  if (kind === 'pledge') {
    add('author', 'author handle', key?.author ?? '');
    add('topic', 'essay topic', key?.topic ?? '');
    add('amount', 'units, e.g. 200');
  } else if (kind === 'essay') {
    add('title', 'essay title');
    add('body', 'essay body');
  } else if (kind === 'mention') {
    add('counterparty', 'counterparty handle');
    add('terms', 'what is being agreed');
  } else if (kind === 'verdict') {
    add('verdict', 'upheld or broken');
  }
  if (kind === 'approval') {
    const accept = el('button', { type: 'button' }, ['accept']);
    const reject = el('button', { type: 'button' }, ['reject']);
    if (state.inFlight) {
      accept.setAttribute('disabled', 'disabled');
      reject.setAttribute('disabled', 'disabled');
    }
    accept.addEventListener('click', () => void submit(path, approvalEnvelope(actor(), 'accept')));
    reject.addEventListener('click', () => void submit(path, approvalEnvelope(actor(), 'reject')));
    form.append(accept, reject);
    return form;
  }
  form.append(submitButton);

  form.addEventListener('submit', (event) => {
    event.preventDefault();
    if (state.inFlight) return;
    if (kind === 'pledge') {
      const amount = validateAmount(inputs.amount.value);
      const author = validateHandle(inputs.author.value, 'author');
      if (!author.ok) return formError(form, author.error);
      if (!amount.ok) return formError(form, amount.error);
      const topic = inputs.topic.value.trim();
      if (!topic) return formError(form, 'topic is required');
      void submit(path, pledgeEnvelope(actor(), author.value, topic, amount.value));
    } else if (kind === 'essay') {
      if (!detail || !key) return formError(form, 'select an agreement first');
      const title = inputs.title.value.trim();
      const body = inputs.body.value.trim();
      if (!title || !body) return formError(form, 'title and body are required');
      void submit(path, essayEnvelope(actor(), key.author, key.topic, title, body));
    } else if (kind === 'mention') {
      const counterparty = validateHandle(inputs.counterparty.value, 'counterparty');
      if (!counterparty.ok) return formError(form, counterparty.error);
      const terms = inputs.terms.value.trim() || 'as discussed';
      void submit(path, mentionEnvelope(actor(), counterparty.value, terms));
    } else if (kind === 'verdict') {
      const verdict = validateVerdict(inputs.verdict.value);
      if (!verdict.ok) return formError(form, verdict.error);
      if (!detail) return formError(form, 'select an agreement first');
      const thread = rootThread(detail);
      if (!thread) return formError(form, 'agreement has no root thread');
      void submit(path, verdictEnvelope(actor(), verdict.value, thread));
    } else if (kind === 'abandon') {
      if (!detail) return formError(form, 'select an agreement first');
      const thread = rootThread(detail);
      if (!thread) return formError(form, 'agreement has no root thread');
      void submit(path, abandonEnvelope(actor(), thread));
    }
  });
  return form;
}

function render(): void {
  const root = document.getElementById('app');
  if (!root) return;
  root.replaceChildren();

  root.append(renderBanner(state.error));
  if (state.lastOutcome) {
    root.append(el('p', { class: 'last-outcome' }, [`last action: ${state.lastOutcome}`]));
  }

  const columns = el('div', { class: 'columns' });
  const left = el('div', { class: 'col col-left' });
  left.append(el('h2', {}, ['paths']));
  left.append(
    renderPathList(state.paths, state.selectedPath, (name) => {
      state.selectedPath = name;
      state.selectedAgreement = null;
      state.detail = null;
      void refresh();
    }),
  );
  left.append(el('h2', {}, ['agreements']));
  left.append(
    renderAgreementList(state.agreements, state.selectedAgreement, (id) => {
      state.selectedAgreement = id;
      void refresh();
    }),
  );

  const middle = el('div', { class: 'col col-middle' });
  if (state.detail) {
    middle.append(renderDetail(state.detail));
  } else {
    middle.append(el('p', { class: 'empty' }, ['select an agreement to see its walk']));
  }
  if (state.selectedPath) {
    middle.append(el('h4', {}, ['act']));
    for (const form of availableActions(state.selectedPath, state.detail)) {
      middle.append(buildForm(form));
    }
  }

  const right = el('div', { class: 'col col-right' });
  right.append(renderOutboxes(state.social, state.mail, state.escrow));

  columns.append(left, middle, right);
  root.append(columns);
}

function wireHeader(): void {
  const serverInput = document.getElementById('server-url') as HTMLInputElement | null;
  if (serverInput) {
    serverInput.value = baseUrl();
    serverInput.addEventListener('change', () => {
      window.localStorage.setItem('accord-server', serverInput.value);
      client = new ApiClient(serverInput.value);
      void refresh();
    });
  }
}

export function start(): void {
  wireHeader();
  void refresh();
  window.setInterval(() => void refresh(), POLL_INTERVAL_MS);
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  start();
}

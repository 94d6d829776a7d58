// DOM construction from the view models. No state lives here.

import type {
  AgreementDetail,
  AgreementSummary,
  EscrowSnapshot,
  OutboxEntry,
  PathInfo,
} from './types.js';
import { dataModelRows, statusLabel, timelineRows } from './view.js';

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === 'class') node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function renderPathList(
  paths: PathInfo[],
  selected: string | null,
  onSelect: (name: string) => void,
): HTMLElement {
  const list = el('ul', { class: 'path-list' });
  for (const path of paths) {
    const btn = el('button', { type: 'button' }, [
      `${path.name} (${path.processes.length} processes)`,
    ]);
    if (path.name === selected) btn.classList.add('selected');
    btn.addEventListener('click', () => onSelect(path.name));
    list.append(el('li', {}, [btn]));
  }
  return list;
}

export function renderAgreementList(
  summaries: AgreementSummary[],
  selected: string | null,
  onSelect: (id: string) => void,
): HTMLElement {
  if (summaries.length === 0) {
    return el('p', { class: 'empty' }, ['no agreements yet']);
  }
  const list = el('ul', { class: 'agreement-list' });
  for (const summary of summaries) {
    const btn = el('button', { type: 'button' }, [`${summary.id} · ${statusLabel(summary)}`]);
    if (summary.id === selected) btn.classList.add('selected');
    btn.addEventListener('click', () => onSelect(summary.id));
    list.append(el('li', {}, [btn]));
  }
  return list;
}

export function renderDetail(detail: AgreementDetail): HTMLElement {
  const box = el('div', { class: 'detail' });
  box.append(
    el('h3', {}, [`${detail.id} — ${statusLabel(detail)}`]),
    el('p', { class: 'muted' }, [`created ${detail.created_at}`]),
  );

  const timeline = el('ol', { class: 'timeline' });
  for (const row of timelineRows(detail)) {
    timeline.append(
      el('li', {}, [
        el('span', { class: 'at' }, [row.at]),
        el('span', { class: `cause cause-${row.cause}` }, [row.cause]),
        el('span', { class: 'label' }, [row.label]),
      ]),
    );
  }
  box.append(el('h4', {}, ['timeline']), timeline);

  const table = el('table', { class: 'model' });
  for (const row of dataModelRows(detail)) {
    table.append(
      el('tr', {}, [
        el('td', { class: 'section' }, [row.section]),
        el('td', { class: 'key' }, [row.key]),
        el('td', { class: 'value' }, [row.value]),
      ]),
    );
  }
  box.append(el('h4', {}, ['data model']), table);
  return box;
}

export function renderOutboxes(
  social: OutboxEntry[],
  mail: OutboxEntry[],
  escrow: EscrowSnapshot,
): HTMLElement {
  const box = el('div', { class: 'outboxes' });
  const describe = (entry: OutboxEntry): string => {
    if (entry.kind === 'status') return `status ${entry.id}: ${entry.text}`;
    if (entry.kind === 'dm') return `dm → ${entry.to}: ${entry.text}`;
    return `email → ${entry.to}: ${entry.subject}`;
  };
  const section = (title: string, entries: OutboxEntry[]) => {
    box.append(el('h4', {}, [title]));
    if (entries.length === 0) {
      box.append(el('p', { class: 'empty' }, ['empty']));
      return;
    }
    const list = el('ul', { class: 'outbox' });
    for (const entry of entries.slice(-8)) {
      list.append(el('li', {}, [describe(entry)]));
    }
    box.append(list);
  };
  section('social outbox', social);
  section('mail outbox', mail);
  box.append(
    el('h4', {}, ['escrow']),
    el('p', { class: 'escrow' }, [
      `balances ${JSON.stringify(escrow.balances)} · holds ${
        Object.keys(escrow.holds).length
      } · settled ${JSON.stringify(escrow.settled)}`,
    ]),
  );
  return box;
}

export function renderBanner(message: string | null): HTMLElement {
  const banner = el('div', { class: 'banner' });
  if (message) {
    banner.classList.add('visible');
    banner.textContent = message;
  }
  return banner;
}

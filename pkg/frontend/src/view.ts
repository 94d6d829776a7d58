// Pure view-model builders: everything rendered is a function of the
// latest GET responses, never of client-side agreement state.

import type { AgreementDetail, AgreementSummary, TransitionRecord } from './types.js';

export interface TimelineRow {
  seq: number;
  label: string;
  cause: 'envelope' | 'activation' | 'exit';
  at: string;
}

export function timelineRows(detail: AgreementDetail): TimelineRow[] {
  return detail.history.map((rec: TransitionRecord) => ({
    seq: rec.seq,
    label: `${rec.from_process ?? '(start)'} → ${
      rec.to_process ?? `(end: ${detail.outcome ?? '?'})`
    }`,
    cause: rec.cause.startsWith('envelope:') ? 'envelope' : (rec.cause as 'activation' | 'exit'),
    at: rec.at,
  }));
}

export interface DataModelRow {
  section: string;
  key: string;
  value: string;
}

export function dataModelRows(detail: AgreementDetail): DataModelRow[] {
  const rows: DataModelRow[] = [];
  for (const section of Object.keys(detail.data_model).sort()) {
    const entries = detail.data_model[section];
    for (const key of Object.keys(entries).sort()) {
      rows.push({ section, key, value: JSON.stringify(entries[key]) });
    }
  }
  return rows;
}

export function statusLabel(item: AgreementSummary | AgreementDetail): string {
  if (item.status === 'active') {
    return `active in ${item.active_process ?? '?'}`;
  }
  return `terminated: ${item.outcome ?? '?'}`;
}

export type ActionForm = 'pledge' | 'approval' | 'essay' | 'mention' | 'verdict' | 'abandon';

const SCARCE_PROCESS_FORMS: Record<string, ActionForm[]> = {
  PledgeAuthoring: ['pledge'],
  AuthorApproval: ['approval'],
  EssaySubmission: ['essay'],
};

export function newAgreementForm(pathName: string): ActionForm | null {
  if (pathName === 'scarce') return 'pledge';
  if (pathName === 'tsc') return 'mention';
  return null;
}

export function availableActions(pathName: string, detail: AgreementDetail | null): ActionForm[] {
  if (detail === null || detail.status === 'terminated' || detail.active_process === null) {
    const form = newAgreementForm(pathName);
    return form ? [form] : [];
  }
  if (pathName === 'scarce') {
    return SCARCE_PROCESS_FORMS[detail.active_process] ?? [];
  }
  if (pathName === 'tsc') {
    return ['verdict', 'abandon'];
  }
  return [];
}

export function rootThread(detail: AgreementDetail): string | null {
  const value = detail.data_model['agreement']?.['root_thread'];
  return typeof value === 'string' ? value : null;
}

export function agreementKey(detail: AgreementDetail): { author: string; topic: string } | null {
  const section = detail.data_model['agreement'];
  const author = section?.['author'];
  const topic = section?.['topic'];
  if (typeof author === 'string' && typeof topic === 'string') {
    return { author, topic };
  }
  return null;
}

export function pledgeTotal(detail: AgreementDetail): number | null {
  const total = detail.data_model['pledges']?.['total'];
  return typeof total === 'number' ? total : null;
}

// Browser entry: wires the DOM control panel, the renderer, and the
// controller together. All structural numbers on screen come from the last
// service response held by the controller.

import { ApiClient } from './api';
import { WorkbenchController, WorkbenchView } from './controller';
import { StructureRenderer } from './render3d';

const api = new ApiClient('');
const controller = new WorkbenchController(api);

const canvas = document.getElementById('viewport') as HTMLCanvasElement;
const renderer = new StructureRenderer(canvas, {
  onNode: (id) => controller.toggleNode(id),
  onMember: (a, b) => controller.toggleMember(a, b),
  onSurfacePoint: (p) => {
    const node = (document.getElementById('place-node') as HTMLInputElement).value.trim();
    if (node) controller.pickPlacement(node, p);
  },
});

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function fmt(n: number | null | undefined): string {
  return n === null || n === undefined ? '-' : String(n);
}

function parseCoords(text: string): Record<string, [number, number, number]> {
  // one node per line: "F 1.2 0.6 0.6"
  const out: Record<string, [number, number, number]> = {};
  for (const line of text.split('\n')) {
    const toks = line.trim().split(/[\s,]+/).filter(Boolean);
    if (toks.length === 0) continue;
    if (toks.length !== 4) throw new Error(`bad coord line: ${line}`);
    out[toks[0]] = [Number(toks[1]), Number(toks[2]), Number(toks[3])];
  }
  return out;
}

function render(view: WorkbenchView): void {
  renderer.update(view.scene, view.previewScene);
  el('banner').textContent = view.error ?? '';
  el('banner').style.display = view.error ? 'block' : 'none';
  const counts = view.state?.counts;
  el('counts').textContent = counts
    ? `${counts.nodes} nodes | ${counts.members} members | dim W = ${counts.dim_w} | ` +
      `mechanisms = ${counts.mechanisms} | rank A = ${counts.rank_a}`
    : 'no structure yet';
  const roles = view.scene
    ? `${view.scene.strutCount} struts / ${view.scene.cableCount} cables`
    : '';
  el('roles').textContent = roles;
  el('selection').textContent =
    `nodes: ${view.selectedNodes.join(', ') || '-'}  ` +
    `members: ${view.selectedMembers.map(([a, b]) => `${a}:${b}`).join(', ') || '-'}`;
  const previewBox = el('preview-box');
  if (view.preview) {
    previewBox.style.display = 'block';
    el('preview-text').textContent =
      `dim W ${fmt(view.preview.dimBefore)} -> ${fmt(view.preview.dimAfter)}; ` +
      `typology delta: struts ${fmt(view.preview.strutDelta)}, ` +
      `cables ${fmt(view.preview.cableDelta)}; ` +
      (view.preview.log ? `${view.preview.log.kind}: ${view.preview.log.detail}` : '');
  } else {
    previewBox.style.display = 'none';
  }
  el('placement').textContent = view.pendingPlacement
    ? `pending: ${view.pendingPlacement.node} @ ` +
      view.pendingPlacement.point.map((v) => v.toFixed(4)).join(', ')
    : '';
  for (const button of document.querySelectorAll<HTMLButtonElement>('button[data-op]')) {
    button.disabled = view.busy;
  }
  el('session').textContent = view.sessionId ? `session ${view.sessionId}` : 'no session';
}

controller.onChange(render);

el<HTMLButtonElement>('btn-new').onclick = () => void controller.createSession();
el<HTMLButtonElement>('btn-load-script').onclick = () => {
  const text = el<HTMLTextAreaElement>('script-text').value;
  if (text.trim()) void controller.createSession(text);
};

el<HTMLButtonElement>('btn-adhere').onclick = () => {
  try {
    const nodes = el<HTMLInputElement>('adhere-nodes').value.split(',').map((s) => s.trim())
      .filter(Boolean);
    const anchorTok = el<HTMLInputElement>('adhere-anchor').value.split(':');
    const cell = {
      nodes,
      shared: controller.view().selectedNodes,
      coords: parseCoords(el<HTMLTextAreaElement>('adhere-coords').value),
      anchor: [anchorTok[0].trim(), anchorTok[1].trim()] as [string, string],
      value: Number(el<HTMLInputElement>('adhere-value').value || '1'),
    };
    const hasState = controller.view().state !== null
      && Object.keys(controller.view().state!.nodes).length > 0;
    if (hasState) void controller.adhereCell(cell);
    else void controller.seedCell({ ...cell, shared: undefined });
  } catch (err) {
    alert(String(err));
  }
};

el<HTMLButtonElement>('btn-preview-fuse').onclick = () => void controller.previewFuseSelected();
el<HTMLButtonElement>('btn-commit-fuse').onclick = () => void controller.commitFuseSelected();
el<HTMLButtonElement>('btn-dismiss-preview').onclick = () => controller.dismissPreview();
el<HTMLButtonElement>('btn-undo').onclick = () => void controller.undo();
el<HTMLButtonElement>('btn-redo').onclick = () => void controller.redo();
el<HTMLButtonElement>('btn-surface').onclick = () => {
  const fix = el<HTMLInputElement>('surface-fix').value.trim() || undefined;
  void controller.requestSurface(fix);
};
el<HTMLButtonElement>('btn-place').onclick = () => void controller.confirmPlacement();
el<HTMLButtonElement>('btn-clear').onclick = () => controller.clearSelection();
el<HTMLInputElement>('toggle-labels').onchange = (ev) => {
  renderer.showLabels = (ev.target as HTMLInputElement).checked;
  render(controller.view());
};

async function download(format: 'structure' | 'obj'): Promise<void> {
  const text = await controller.exportStructure(format);
  if (text === null) return;
  const blob = new Blob([text], { type: 'text/plain' });
  const a = document.createElement('a');
  a.href = URL.createObjectURL(blob);
  a.download = format === 'obj' ? 'structure.obj' : 'structure.tstruct';
  a.click();
  URL.revokeObjectURL(a.href);
}
el<HTMLButtonElement>('btn-export-structure').onclick = () => void download('structure');
el<HTMLButtonElement>('btn-export-obj').onclick = () => void download('obj');

render(controller.view());

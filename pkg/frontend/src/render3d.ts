// three.js projection of a SceneModel. Dumb by design: rebuilds objects from
// the model, forwards picks, computes nothing structural.

import * as THREE from 'three';
import { OrbitControls } from 'three/addons/controls/OrbitControls.js';
import { SceneModel, SegmentModel } from './scene';

export interface PickHandlers {
  onNode?: (id: string) => void;
  onMember?: (a: string, b: string) => void;
  onSurfacePoint?: (p: [number, number, number]) => void;
}

const NODE_RADIUS = 0.05;

function segmentMesh(seg: SegmentModel): THREE.Mesh {
  const from = new THREE.Vector3(...seg.from);
  const to = new THREE.Vector3(...seg.to);
  const dir = to.clone().sub(from);
  const geom = new THREE.CylinderGeometry(seg.radius, seg.radius, dir.length(), 10);
  const mat = new THREE.MeshLambertMaterial({
    color: seg.highlight ? '#ffffff' : seg.color,
    emissive: seg.highlight ? seg.color : '#000000',
    transparent: seg.preview,
    opacity: seg.preview ? 0.45 : 1.0,
  });
  const mesh = new THREE.Mesh(geom, mat);
  mesh.position.copy(from.clone().add(to).multiplyScalar(0.5));
  mesh.quaternion.setFromUnitVectors(new THREE.Vector3(0, 1, 0), dir.clone().normalize());
  mesh.userData.member = seg.member;
  return mesh;
}

function labelSprite(text: string): THREE.Sprite {
  const canvas = document.createElement('canvas');
  canvas.width = 96;
  canvas.height = 48;
  const ctx = canvas.getContext('2d')!;
  ctx.font = '32px sans-serif';
  ctx.fillStyle = '#e8e8e8';
  ctx.textAlign = 'center';
  ctx.textBaseline = 'middle';
  ctx.fillText(text, 48, 24);
  const sprite = new THREE.Sprite(new THREE.SpriteMaterial({
    map: new THREE.CanvasTexture(canvas),
    depthTest: false,
  }));
  sprite.scale.set(0.4, 0.2, 1);
  return sprite;
}

export class StructureRenderer {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private raycaster = new THREE.Raycaster();
  private committed = new THREE.Group();
  private previewGroup = new THREE.Group();
  private surfaceGroup = new THREE.Group();
  private labelGroup = new THREE.Group();
  showLabels = true;

  constructor(private canvas: HTMLCanvasElement, private handlers: PickHandlers = {}) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.scene.background = new THREE.Color('#14161a');
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.01, 100);
    this.camera.position.set(3, 2.2, 3.5);
    this.controls = new OrbitControls(this.camera, canvas);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.65));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(4, 6, 3);
    this.scene.add(key);
    this.scene.add(this.committed, this.previewGroup, this.surfaceGroup, this.labelGroup);
    canvas.addEventListener('pointerdown', (ev) => this.pick(ev));
    const resize = () => {
      const w = canvas.clientWidth || canvas.width;
      const h = canvas.clientHeight || canvas.height;
      this.renderer.setSize(w, h, false);
      this.camera.aspect = w / h;
      this.camera.updateProjectionMatrix();
    };
    new ResizeObserver(resize).observe(canvas);
    resize();
    const loop = () => {
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
      requestAnimationFrame(loop);
    };
    loop();
  }

  update(model: SceneModel | null, preview: SceneModel | null): void {
    this.committed.clear();
    this.previewGroup.clear();
    this.surfaceGroup.clear();
    this.labelGroup.clear();
    if (!model) return;
    for (const seg of model.segments) {
      this.committed.add(segmentMesh(seg));
    }
    for (const node of model.nodes) {
      const mat = new THREE.MeshLambertMaterial({
        color: node.selected ? '#ffd24d' : '#dddddd',
      });
      const mesh = new THREE.Mesh(
        new THREE.SphereGeometry(node.selected ? NODE_RADIUS * 1.6 : NODE_RADIUS, 12, 12),
        mat);
      mesh.position.set(...node.position);
      mesh.userData.node = node.id;
      this.committed.add(mesh);
      if (this.showLabels) {
        const label = labelSprite(node.id);
        label.position.set(node.position[0], node.position[1] + 0.12, node.position[2]);
        this.labelGroup.add(label);
      }
    }
    if (model.surfacePoints.length) {
      const geom = new THREE.BufferGeometry();
      geom.setAttribute('position', new THREE.Float32BufferAttribute(
        model.surfacePoints.flat(), 3));
      const pts = new THREE.Points(geom, new THREE.PointsMaterial({
        color: '#57d98f', size: 0.045, transparent: true, opacity: 0.7,
      }));
      pts.userData.surface = true;
      this.surfaceGroup.add(pts);
    }
    if (preview) {
      for (const seg of preview.segments) {
        this.previewGroup.add(segmentMesh(seg));
      }
      // offset the ghost slightly so both states read side by side
      this.previewGroup.position.setX(0.02);
    }
  }

  private pick(ev: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      -((ev.clientY - rect.top) / rect.height) * 2 + 1,
    );
    this.raycaster.setFromCamera(ndc, this.camera);
    this.raycaster.params.Points.threshold = 0.08;
    const surfaceHits = this.raycaster.intersectObjects(this.surfaceGroup.children);
    if (surfaceHits.length && this.handlers.onSurfacePoint) {
      const p = surfaceHits[0].point;
      this.handlers.onSurfacePoint([p.x, p.y, p.z]);
      return;
    }
    const hits = this.raycaster.intersectObjects(this.committed.children);
    for (const hit of hits) {
      const data = hit.object.userData;
      if (data.node && this.handlers.onNode) {
        this.handlers.onNode(data.node as string);
        return;
      }
      if (data.member && this.handlers.onMember) {
        const [a, b] = data.member as [string, string];
        this.handlers.onMember(a, b);
        return;
      }
    }
  }
}

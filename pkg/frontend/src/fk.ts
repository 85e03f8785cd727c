// Client-side forward kinematics over the streamed skeleton description.
// Must agree with the server's kinematics to within a millimeter; the test
// suite checks it against a fixture generated by the server implementation.

import { Quat, Vec3, add, qmul, qrotate } from "./math.js";

export interface SkeletonDef {
  joint_names: string[];
  parent_index: number[];
  offsets: number[][];
  foot_joint_indices: number[];
}

export interface FramePose {
  root_position: number[];
  joints: number[][]; // per-joint local quaternion [w,x,y,z]; index 0 is the root's world rotation
  contacts?: number[];
}

export function forwardKinematics(skel: SkeletonDef, frame: FramePose): Vec3[] {
  const J = skel.joint_names.length;
  const positions: Vec3[] = new Array(J);
  const globals: Quat[] = new Array(J);
  positions[0] = [frame.root_position[0], frame.root_position[1], frame.root_position[2]];
  globals[0] = frame.joints[0] as Quat;
  for (let j = 1; j < J; j++) {
    const p = skel.parent_index[j];
    const offset = skel.offsets[j] as Vec3;
    positions[j] = add(positions[p], qrotate(globals[p], offset));
    globals[j] = qmul(globals[p], frame.joints[j] as Quat);
  }
  return positions;
}

export interface Bone {
  from: number;
  to: number;
}

export function boneList(skel: SkeletonDef): Bone[] {
  const bones: Bone[] = [];
  for (let j = 1; j < skel.parent_index.length; j++) {
    bones.push({ from: skel.parent_index[j], to: j });
  }
  return bones;
}

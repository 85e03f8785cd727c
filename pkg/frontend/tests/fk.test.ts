import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { SkeletonDef, boneList, forwardKinematics } from "../src/fk.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(
  readFileSync(join(here, "fixtures", "fk_fixture.json"), "utf-8"),
);

describe("client-side forward kinematics", () => {
  const skel: SkeletonDef = fixture.skeleton;

  it("matches the server implementation within 1e-3 cm", () => {
    for (const frame of fixture.frames) {
      const positions = forwardKinematics(skel, frame);
      let worst = 0;
      frame.expected_positions.forEach((expected: number[], j: number) => {
        for (let c = 0; c < 3; c++) {
          worst = Math.max(worst, Math.abs(positions[j][c] - expected[c]));
        }
      });
      expect(worst).toBeLessThan(1e-3);
    }
  });

  it("keeps the root at the streamed root position", () => {
    const frame = fixture.frames[0];
    const positions = forwardKinematics(skel, frame);
    expect(positions[0]).toEqual(frame.root_position);
  });

  it("identity pose stacks offsets down every chain", () => {
    const identity = {
      root_position: [0, 0, 0],
      joints: skel.joint_names.map(() => [1, 0, 0, 0]),
    };
    const positions = forwardKinematics(skel, identity);
    for (let j = 1; j < skel.joint_names.length; j++) {
      const p = skel.parent_index[j];
      for (let c = 0; c < 3; c++) {
        expect(positions[j][c]).toBeCloseTo(positions[p][c] + skel.offsets[j][c], 9);
      }
    }
  });

  it("derives one bone per non-root joint", () => {
    expect(boneList(skel)).toHaveLength(skel.joint_names.length - 1);
  });
});

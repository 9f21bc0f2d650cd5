// Shapes shared with the engine's control channel (JSON over WebSocket).

export interface RefTransform {
  pos: number[];
  yaw: number;
  pitch: number;
}

export interface WatchInfo {
  kind: "avatar" | "performer" | "point";
  id?: string;
  pos?: number[];
}

export interface PathInfo {
  cells: number[][];
  done: boolean;
}

export interface AvatarInfo {
  id: string;
  stream: number;
  ref: RefTransform;
  position: number[];
  heading_yaw: number;
  watch: WatchInfo | null;
  path: PathInfo | null;
  stale: boolean;
}

export interface CueInfo {
  id: string;
  name: string;
  at_tick: number | null;
  fire_count: number;
}

export interface VolumeInfo {
  min: number[];
  max: number[];
}

export interface NavGridInfo {
  cols: number;
  rows: number;
  cell_size: number;
  origin: number[];
}

export interface StageInfo {
  c_volumes: Record<string, VolumeInfo>;
  a_to_b: { translation: number[]; yaw_deg: number };
  nav_grid: NavGridInfo | null;
}

export interface StateSnapshot {
  tick_no: number;
  avatars: AvatarInfo[];
  ownership: Record<string, Record<string, string>>;
  cues: CueInfo[];
  stage: StageInfo;
}

// Outbound: the only four message types the console may emit.

export interface AxesMessage {
  type: "axes";
  avatar: string;
  forward: number;
  lateral: number;
  vertical: number;
  yaw_rate: number;
  pitch_rate: number;
}

export interface OwnershipMessage {
  type: "ownership";
  avatar: string;
  channel: string;
  owner: string;
  weight?: number;
}

export interface FireCueMessage {
  type: "fire_cue";
  id: string;
}

export interface SubscribeMessage {
  type: "subscribe_state";
}

export type ControlMessage =
  | AxesMessage
  | OwnershipMessage
  | FireCueMessage
  | SubscribeMessage;

// Inbound.

export interface ServerState extends StateSnapshot {
  type: "state";
}

export interface ServerError {
  type: "error";
  error: string;
  detail?: string;
}

export interface ServerOk {
  type: "ok";
  fired?: string;
}

export type ServerMessage =
  | ServerState
  | ServerError
  | ServerOk
  | { type: "subscribed" };

export const CHANNELS = [
  "root_xy",
  "root_vertical",
  "root_yaw",
  "root_pitch",
  "limbs",
  "head",
] as const;

export const OWNERS = ["mocap", "manipulator", "procedural"] as const;

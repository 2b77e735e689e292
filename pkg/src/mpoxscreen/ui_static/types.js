/** Payload shapes of the loopback HTTP API (v1). */
/** Operator decision vocabulary; must match the service exactly. */
export const DECISIONS = ["isolated", "referred_pcr", "released"];
export const PENDING = "pending";

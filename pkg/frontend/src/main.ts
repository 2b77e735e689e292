/** Browser entry point: mount the console on the #app element. */

import { ApiClient } from "./api.js";
import { App } from "./app.js";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  void new App(root, new ApiClient()).init();
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}

/** Browser entry point. The service mounts this bundle at /ui, so API
 * calls go to the same origin with no prefix. */

import { MechKbClient } from "./api.js";
import { initApp } from "./app.js";

initApp({
  document,
  window,
  client: new MechKbClient(""),
});

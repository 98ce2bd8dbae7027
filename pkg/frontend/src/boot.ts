/** Browser-only entry: boots the app against the serving origin (or the
 * UGDA_SERVICE_URL override for a separately hosted service). */

import { boot } from './main';

const base = window.UGDA_SERVICE_URL ?? `${location.protocol}//${location.host}`;
void boot(base, document);

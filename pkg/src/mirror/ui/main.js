/** Entry point: serve-time bootstrap against the hosting service. */
import { bootstrap } from './bootstrap.js';
bootstrap(document.getElementById('app'));

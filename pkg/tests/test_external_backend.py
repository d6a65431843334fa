import io
import json
import logging
import os
import shlex
import socketserver
import sys
import threading
import unittest

from diar_dialogue.dialogue_builder import read_dialogues
from diar_dialogue.exceptions import BackendError
from diar_dialogue.external_backend import external_backend
from diar_dialogue.inference_harness import FAILED, OK, run_dialogue

TESTS_DIR = os.path.dirname(__file__)
GOLDEN_FILE = os.path.join(TESTS_DIR, "golden", "sample.dialogues.jsonl")
SCRIPT = os.path.join(TESTS_DIR, "backend_scripts", "scripted_backend.py")
REPLY = "<|start_of_spk|><|spk_idx_0|><|end_of_spk|>hello world"


def script_command(mode, fail_turn=1):
    return (f"external:{shlex.quote(sys.executable)} {shlex.quote(SCRIPT)} "
            f"{mode} {fail_turn}")


class EchoHandler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            request = json.loads(raw.decode("utf-8"))
            if request["type"] == "close":
                break
            text = "" if request["type"] == "open_audio" else REPLY
            self.wfile.write((json.dumps({"text": text}) + "\n")
                             .encode("utf-8"))
            self.wfile.flush()


class TestExternalBackend(unittest.TestCase):
    """
    Unit test for the line-JSON external backend.

    This test validates:
    - A spawned process and a TCP server are driven through whole
      dialogues.
    - Error replies fail one turn; malformed replies and timeouts abort the
      session.
    - Stateless backends receive the dialogue history.
    """

    def setUp(self):
        """
        Set up in-memory logging and a two-turn dialogue.
        """
        self.log_stream = io.StringIO()
        self.log_handler = logging.StreamHandler(self.log_stream)
        self.logger = logging.getLogger()
        self.logger.handlers = []
        self.logger.addHandler(self.log_handler)
        self.logger.setLevel(logging.INFO)

        with open(GOLDEN_FILE, "r", encoding="utf-8") as f:
            self.dialogue = read_dialogues(f)[0]

    def tearDown(self):
        """
        Remove the in-memory log handler.
        """
        self.logger.removeHandler(self.log_handler)
        self.log_handler.close()

    def test_process_echo(self):
        """
        Test a full dialogue against a spawned process.
        """
        backend = external_backend(script_command("echo"), timeout=10)
        responses = run_dialogue(self.dialogue, backend)
        self.assertEqual([r.status for r in responses], [OK, OK])
        self.assertEqual([r.text for r in responses], [REPLY, REPLY])

    def test_error_reply_fails_one_turn(self):
        """
        Test that an error field fails only its own turn.
        """
        backend = external_backend(script_command("error", 0), timeout=10)
        responses = run_dialogue(self.dialogue, backend)
        self.assertEqual([r.status for r in responses], [FAILED, OK])
        self.assertIn("decoder overloaded", responses[0].diagnostic)
        self.assertEqual(responses[1].text, REPLY)

    def test_malformed_reply_aborts_session(self):
        """
        Test that a non-JSON reply aborts the rest of the session.
        """
        backend = external_backend(script_command("malformed", 0), timeout=10)
        responses = run_dialogue(self.dialogue, backend)
        self.assertEqual([r.status for r in responses], [FAILED, FAILED])
        self.assertIn("Protocol violation", responses[0].diagnostic)
        self.assertIn("Session unusable", responses[1].diagnostic)
        self.assertIn("Aborting backend session", self.log_stream.getvalue())

    def test_timeout_aborts_session(self):
        """
        Test that a stalled backend times out.
        """
        backend = external_backend(script_command("stall", 0), timeout=0.5)
        responses = run_dialogue(self.dialogue, backend)
        self.assertEqual([r.status for r in responses], [FAILED, FAILED])
        self.assertIn("No reply within 0.5 s", responses[0].diagnostic)

    def test_stateless_backend_gets_history(self):
        """
        Test that declared statelessness switches on history prompts.
        """
        backend = external_backend(script_command("stateless"), timeout=10)
        responses = run_dialogue(self.dialogue, backend)
        turns = self.dialogue.turns
        history = turns[0].prompt_text + responses[0].text
        self.assertEqual(responses[0].text,
                         f"{REPLY} {len(turns[0].prompt_text)}")
        self.assertEqual(
            responses[1].text,
            f"{REPLY} {len(history + turns[1].prompt_text)}",
            "The second prompt must carry the first turn."
        )

    def test_tcp_server(self):
        """
        Test a full dialogue against a TCP server.
        """
        server = socketserver.ThreadingTCPServer(("127.0.0.1", 0),
                                                 EchoHandler)
        server.daemon_threads = True
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address
            backend = external_backend(f"tcp://{host}:{port}", timeout=10)
            responses = run_dialogue(self.dialogue, backend)
        finally:
            server.shutdown()
            server.server_close()
        self.assertEqual([r.text for r in responses], [REPLY, REPLY])

    def test_endpoint_validation(self):
        """
        Test rejected endpoints and unreachable backends.
        """
        with self.assertRaises(ValueError):
            external_backend("external:")
        with self.assertRaises(ValueError):
            external_backend("python serve.py", timeout=0)
        with self.assertRaises(ValueError):
            external_backend("tcp://localhost").new_session()
        with self.assertRaises(BackendError):
            external_backend("/nonexistent/recognizer --flag").new_session()


if __name__ == "__main__":
    unittest.main()

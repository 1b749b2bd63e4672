"""S3-compatible backend: one bucket per owner, ACLs enforced by the store.

Each identity talks to the store with its own credentials, so the store,
not this client, decides what a principal may do:

* read grants on ``main/`` objects are per-object ACL grants (``READ`` to
  the reader's canonical user id, or to the AllUsers group for ``"*"``);
* temp-write is a bucket-policy statement allowing ``s3:PutObject`` and
  ``s3:DeleteObject`` on ``tmp/*`` to the writer's principal ARN;
* uploads by writers carry ``bucket-owner-full-control`` so the owner can
  read and re-ACL them.

Configuration comes from the environment::

    COOWN_S3_ENDPOINT          endpoint URL (omit for AWS)
    COOWN_S3_REGION            region, default us-east-1
    COOWN_S3_BUCKET_PREFIX     bucket name prefix, default "coown"
    COOWN_S3_ACCESS_KEY_<ID>   per-identity access key
    COOWN_S3_SECRET_KEY_<ID>   per-identity secret key
    COOWN_S3_CANONICAL_ID_<ID> canonical user id used in object ACL grants
    COOWN_S3_ARN_<ID>          principal ARN used in bucket policies

``<ID>`` is the identity upper-cased with non-alphanumerics replaced by
``_``.  Identities without keys fall back to the default boto3 chain.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from typing import Mapping

from ..errors import AccessDeniedError, AlreadyExistsError, ObjectNotFoundError
from .backends import PUBLIC, StorageBackend, check_path

ALL_USERS = "http://acs.amazonaws.com/groups/global/AllUsers"
OWNER_TAG = "coown-owner"
TMP_WRITE_SID = "CoownTempWrite"
PUBLIC_LIST_SID = "CoownListMain"


@dataclass(frozen=True)
class S3Identity:
    access_key: str | None = None
    secret_key: str | None = None
    canonical_id: str | None = None
    arn: str | None = None


def env_key(identity: str) -> str:
    return re.sub(r"[^A-Za-z0-9]", "_", identity).upper()


def identity_from_env(identity: str, environ: Mapping[str, str] = os.environ) -> S3Identity:
    k = env_key(identity)
    return S3Identity(environ.get(f"COOWN_S3_ACCESS_KEY_{k}"), environ.get(f"COOWN_S3_SECRET_KEY_{k}"),
                      environ.get(f"COOWN_S3_CANONICAL_ID_{k}"), environ.get(f"COOWN_S3_ARN_{k}"))


def bucket_name(prefix: str, owner: str) -> str:
    """Valid, collision-free bucket name for an owner identity."""
    slug = re.sub(r"[^a-z0-9-]", "-", owner.lower()).strip("-")[:30] or "owner"
    return f"{prefix}-{slug}-{hashlib.sha256(owner.encode()).hexdigest()[:10]}"


class S3Backend(StorageBackend):
    def __init__(self, *, endpoint: str | None = None, region: str | None = None, prefix: str | None = None,
                 identities: Mapping[str, S3Identity] | None = None, environ: Mapping[str, str] = os.environ):
        import boto3  # imported lazily; only this backend needs it

        self._boto3 = boto3
        self.endpoint = endpoint or environ.get("COOWN_S3_ENDPOINT")
        self.region = region or environ.get("COOWN_S3_REGION", "us-east-1")
        self.prefix = prefix or environ.get("COOWN_S3_BUCKET_PREFIX", "coown")
        self._environ = environ
        self._identities = dict(identities or {})
        self._clients: dict[str, object] = {}

    # -- plumbing --------------------------------------------------------

    def identity(self, name: str) -> S3Identity:
        if name not in self._identities:
            self._identities[name] = identity_from_env(name, self._environ)
        return self._identities[name]

    def client(self, principal: str):
        if principal not in self._clients:
            ident = self.identity(principal)
            kwargs = {"region_name": self.region}
            if self.endpoint:
                kwargs["endpoint_url"] = self.endpoint
            if ident.access_key:
                kwargs["aws_access_key_id"] = ident.access_key
                kwargs["aws_secret_access_key"] = ident.secret_key
            self._clients[principal] = self._boto3.client("s3", **kwargs)
        return self._clients[principal]

    def canonical_id(self, principal: str) -> str:
        ident = self.identity(principal)
        if ident.canonical_id:
            return ident.canonical_id
        # Single-credential setups (local emulators): stable synthetic id.
        return hashlib.sha256(principal.encode()).hexdigest()

    def principal_arn(self, principal: str) -> str:
        return self.identity(principal).arn or f"arn:aws:iam::000000000000:user/{principal}"

    def bucket(self, owner: str) -> str:
        return bucket_name(self.prefix, owner)

    @staticmethod
    def _translate(exc, owner: str, path: str):
        code = exc.response.get("Error", {}).get("Code", "")
        where = f"{owner}:{path}"
        if code in ("NoSuchKey", "404", "NotFound", "NoSuchBucket"):
            return ObjectNotFoundError(f"{where} does not exist")
        if code in ("PreconditionFailed", "412", "ConditionalRequestConflict"):
            return AlreadyExistsError(f"{where} already exists")
        if code in ("AccessDenied", "403", "Forbidden", "AllAccessDisabled"):
            return AccessDeniedError(f"access to {where} denied")
        return exc

    def _call(self, principal, owner, path, op, **kwargs):
        from botocore.exceptions import ClientError

        try:
            return getattr(self.client(principal), op)(Bucket=self.bucket(owner), **kwargs)
        except ClientError as exc:
            raise self._translate(exc, owner, path) from exc

    # -- accounts --------------------------------------------------------

    def accounts(self):
        from botocore.exceptions import ClientError

        out = []
        c = self.client("admin")
        for b in c.list_buckets().get("Buckets", []):
            if not b["Name"].startswith(self.prefix + "-"):
                continue
            try:
                tags = c.get_bucket_tagging(Bucket=b["Name"])["TagSet"]
            except ClientError:
                continue
            owner = next((t["Value"] for t in tags if t["Key"] == OWNER_TAG), None)
            if owner and self.bucket(owner) == b["Name"]:
                out.append(owner)
        return sorted(out)

    def create_account(self, owner):
        from botocore.exceptions import ClientError

        c = self.client(owner)
        name = self.bucket(owner)
        try:
            kwargs = {"Bucket": name}
            if self.region != "us-east-1":
                kwargs["CreateBucketConfiguration"] = {"LocationConstraint": self.region}
            c.create_bucket(**kwargs)
        except ClientError as exc:
            if exc.response.get("Error", {}).get("Code") not in ("BucketAlreadyOwnedByYou", "BucketAlreadyExists"):
                raise
        c.put_bucket_tagging(Bucket=name, Tagging={"TagSet": [{"Key": OWNER_TAG, "Value": owner}]})
        policy = self._policy(owner)
        if not any(s.get("Sid") == PUBLIC_LIST_SID for s in policy["Statement"]):
            policy["Statement"].append({
                "Sid": PUBLIC_LIST_SID, "Effect": "Allow", "Principal": "*", "Action": "s3:ListBucket",
                "Resource": f"arn:aws:s3:::{name}", "Condition": {"StringLike": {"s3:prefix": "main/*"}}})
            self._put_policy(owner, policy)

    # -- objects ---------------------------------------------------------

    def put(self, principal, owner, path, data):
        check_path(path)
        kwargs = {"Key": path, "Body": bytes(data), "IfNoneMatch": "*", "Metadata": {"coown-writer": principal}}
        if principal != owner:
            if not path.startswith("tmp/"):
                raise AccessDeniedError(f"{principal} may not write {owner}:{path}")
            kwargs["ACL"] = "bucket-owner-full-control"
        self._call(principal, owner, path, "put_object", **kwargs)

    def get(self, principal, owner, path):
        check_path(path)
        return self._call(principal, owner, path, "get_object", Key=path)["Body"].read()

    def list(self, principal, owner, prefix):
        from botocore.exceptions import ClientError

        keys = []
        paginator = self.client(principal).get_paginator("list_objects_v2")
        try:
            for page in paginator.paginate(Bucket=self.bucket(owner), Prefix=prefix):
                keys.extend(o["Key"] for o in page.get("Contents", []))
        except ClientError as exc:
            err = self._translate(exc, owner, prefix)
            if isinstance(err, AccessDeniedError):
                return []
            raise err from exc
        if principal == owner:
            return sorted(keys)
        readable = []
        for key in keys:
            try:
                self._call(principal, owner, key, "head_object", Key=key)
            except (AccessDeniedError, ObjectNotFoundError):
                continue
            readable.append(key)
        return sorted(readable)

    def delete(self, principal, owner, path):
        check_path(path)
        self._call(principal, owner, path, "head_object", Key=path)
        self._call(principal, owner, path, "delete_object", Key=path)

    # -- ACLs ------------------------------------------------------------

    def _grantee(self, principal) -> str:
        if principal == PUBLIC:
            return f'uri="{ALL_USERS}"'
        return f'id="{self.canonical_id(principal)}"'

    def set_read_acl(self, owner, path, principal, allow):
        # Grant headers rather than an ACL document: the header form is what
        # every S3-compatible store accepts for multi-grantee updates.
        acl = self._call(owner, owner, path, "get_object_acl", Key=path)
        readers = set()
        for g in acl["Grants"]:
            if g["Permission"] == "READ":
                gid = g["Grantee"].get("ID")
                readers.add(f'id="{gid}"' if gid else f'uri="{g["Grantee"].get("URI")}"')
        (readers.add if allow else readers.discard)(self._grantee(principal))
        kwargs = {"Key": path, "GrantFullControl": f'id="{acl["Owner"]["ID"]}"'}
        if readers:
            kwargs["GrantRead"] = ", ".join(sorted(readers))
        self._call(owner, owner, path, "put_object_acl", **kwargs)

    def read_acl(self, owner, path):
        acl = self._call(owner, owner, path, "get_object_acl", Key=path)
        by_id = {self.canonical_id(name): name for name in self._known_identities(owner)}
        out = set()
        for g in acl["Grants"]:
            if g["Permission"] not in ("READ", "FULL_CONTROL"):
                continue
            if g["Grantee"].get("URI") == ALL_USERS:
                out.add(PUBLIC)
            elif g["Grantee"].get("ID") in by_id and by_id[g["Grantee"]["ID"]] != owner:
                out.add(by_id[g["Grantee"]["ID"]])
        return out

    def _known_identities(self, owner):
        # identities are registered on first use; accounts are discoverable from tags
        return set(self._identities) | set(self.accounts()) | {owner}

    def _policy(self, owner) -> dict:
        from botocore.exceptions import ClientError

        try:
            doc = self.client(owner).get_bucket_policy(Bucket=self.bucket(owner))["Policy"]
            return json.loads(doc)
        except ClientError as exc:
            if exc.response.get("Error", {}).get("Code") == "NoSuchBucketPolicy":
                return {"Version": "2012-10-17", "Statement": []}
            raise self._translate(exc, owner, "<policy>") from exc

    def _put_policy(self, owner, policy):
        self.client(owner).put_bucket_policy(Bucket=self.bucket(owner), Policy=json.dumps(policy))

    def set_temp_write_acl(self, owner, principal, allow):
        policy = self._policy(owner)
        writers = self.temp_writers(owner, policy)
        if allow:
            writers.add(principal)
        else:
            writers.discard(principal)
        policy["Statement"] = [s for s in policy["Statement"] if s.get("Sid") != TMP_WRITE_SID]
        if writers:
            policy["Statement"].append({
                "Sid": TMP_WRITE_SID, "Effect": "Allow",
                "Principal": {"AWS": sorted(self.principal_arn(w) for w in writers)},
                "Action": ["s3:PutObject", "s3:DeleteObject"],
                "Resource": f"arn:aws:s3:::{self.bucket(owner)}/tmp/*"})
        self._put_policy(owner, policy)

    def temp_writers(self, owner, policy: dict | None = None):
        policy = policy or self._policy(owner)
        arns = set()
        for s in policy["Statement"]:
            if s.get("Sid") == TMP_WRITE_SID:
                p = s["Principal"]["AWS"]
                arns.update([p] if isinstance(p, str) else p)
        by_arn = {self.principal_arn(n): n for n in self._known_identities(owner)}
        out = set()
        for arn in arns:
            out.add(by_arn.get(arn, arn.rsplit("/", 1)[-1]))
        return out

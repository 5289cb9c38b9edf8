import uuid

import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="BenchmarkRun",
            fields=[
                (
                    "id",
                    models.UUIDField(
                        default=uuid.uuid4,
                        editable=False,
                        primary_key=True,
                        serialize=False,
                    ),
                ),
                ("kernel", models.CharField(db_index=True, max_length=20)),
                ("scenario", models.PositiveSmallIntegerField()),
                ("size", models.PositiveIntegerField(db_index=True)),
                ("config", models.JSONField()),
                ("eps_b", models.FloatField()),
                ("eps_k", models.FloatField(blank=True, null=True)),
                ("t_path", models.FloatField(default=0.0)),
                ("t_rec", models.FloatField(default=0.0)),
                ("t_fac", models.FloatField(default=0.0)),
                ("t_app", models.FloatField(default=0.0)),
                ("nnz", models.BigIntegerField(default=0)),
                ("report", models.JSONField(default=dict)),
                (
                    "created_at",
                    models.DateTimeField(
                        db_index=True, default=django.utils.timezone.now
                    ),
                ),
            ],
            options={
                "verbose_name": "Benchmark Run",
                "verbose_name_plural": "Benchmark Runs",
                "ordering": ["-created_at"],
            },
        ),
    ]

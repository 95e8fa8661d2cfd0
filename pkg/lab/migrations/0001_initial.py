# Generated by Django 5.2 on 2026-10-18 09:12

import django.db.models.deletion
import lab.models
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Experiment',
            fields=[
                ('experiment_id', models.UUIDField(default=uuid.uuid4, primary_key=True, serialize=False)),
                ('command', models.CharField(choices=[('train', 'Train'), ('eval', 'Evaluate'), ('decompose', 'Decompose'), ('baselines', 'Baselines'), ('export', 'Export')], max_length=16)),
                ('scenario_path', models.CharField(blank=True, max_length=500)),
                ('scenario', models.JSONField(default=dict)),
                ('seeds', models.JSONField(default=list)),
                ('output_dir', models.CharField(max_length=500)),
                ('exports', models.JSONField(blank=True, default=dict)),
                ('argv', models.JSONField(blank=True, default=list)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=10)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
        ),
        migrations.CreateModel(
            name='Run',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('seed', lab.models.SeedField()),
                ('algorithm', models.CharField(choices=[('ppo', 'PPO'), ('a2c', 'A2C'), ('random', 'Random beamforming'), ('matched', 'Matched-beam heuristic'), ('ao', 'Hybrid decomposition')], max_length=10)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='completed', max_length=10)),
                ('metrics', models.JSONField(blank=True, default=dict)),
                ('checkpoint_path', models.CharField(blank=True, max_length=500)),
                ('log_path', models.CharField(blank=True, max_length=500)),
                ('wall_clock_seconds', models.FloatField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='runs', to='lab.experiment')),
            ],
            options={
                'ordering': ('experiment', 'algorithm', 'seed'),
            },
        ),
    ]
